use std::path::Path;

use viewseg::mesh::{save_ply, Mesh, PlyWriteOptions};
use viewseg::Result;

/// Label colors, label 1 first: head red, torso blue, right arm orange,
/// right hand yellow, right leg green, right foot teal, left arm purple,
/// left hand pink, left leg brown, left foot gray. Labels past ten wrap.
pub const PALETTE: [[u8; 3]; 10] = [
    [228, 26, 28],
    [55, 126, 184],
    [255, 127, 0],
    [255, 221, 51],
    [77, 175, 74],
    [0, 160, 160],
    [152, 78, 163],
    [247, 129, 191],
    [166, 86, 40],
    [153, 153, 153],
];

pub fn label_color(label: u32) -> [u8; 3] {
    PALETTE[(label.max(1) as usize - 1) % PALETTE.len()]
}

/// Gray level of a normalized entropy: white when certain, black when uniform.
pub fn entropy_color(h: f64) -> [u8; 3] {
    let g = (255.0 * (1.0 - h.clamp(0.0, 1.0))).round() as u8;
    [g, g, g]
}

/// Write `mesh` with the predicted labels and palette colors.
pub fn save_colored(path: &Path, mesh: &Mesh, labels: &[u32]) -> Result<()> {
    let colors: Vec<[u8; 3]> = labels.iter().map(|&l| label_color(l)).collect();
    let labeled = mesh.clone().without_labels().with_labels(labels.to_vec())?;
    save_ply(path, &labeled, &PlyWriteOptions { colors: Some(&colors), ..Default::default() })
}

pub fn save_entropy(path: &Path, mesh: &Mesh, entropy: &[f64]) -> Result<()> {
    let colors: Vec<[u8; 3]> = entropy.iter().map(|&h| entropy_color(h)).collect();
    save_ply(path, &mesh.clone().without_labels(), &PlyWriteOptions { colors: Some(&colors), ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors() {
        assert_eq!(label_color(1), PALETTE[0]);
        assert_eq!(label_color(11), PALETTE[0]);
        assert_eq!(entropy_color(0.0), [255; 3]);
        assert_eq!(entropy_color(1.0), [0; 3]);
        assert_eq!(entropy_color(0.5), [128; 3]);
    }
}
