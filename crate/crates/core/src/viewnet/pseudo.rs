use crate::decompose::View;
use crate::error::{Error, Result};

/// Grid neighbourhoods of a view with normalized `(drow, dcol) / r` offsets.
///
/// Stored in compressed form: the entries of vertex `v` are
/// `offsets[v]..offsets[v + 1]`. The reverse index lists, for each vertex
/// `y`, every entry whose neighbour is `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoCoords {
    pub radius: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    coords: Vec<[f64; 2]>,
    rev_offsets: Vec<usize>,
    rev_entries: Vec<usize>,
}

impl PseudoCoords {
    /// Neighbourhoods within Chebyshev radius `radius` of each vertex's grid position.
    pub fn build(view: &View, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::Config("pseudo-coordinate radius must be at least 1".into()));
        }
        Self::from_grid(&view.grid_pos, view.width, view.height, radius)
    }

    pub fn from_grid(grid_pos: &[(usize, usize)], width: usize, height: usize, radius: usize) -> Result<Self> {
        if grid_pos.is_empty() {
            return Err(Error::Validation("view has no vertices".into()));
        }
        let mut lookup = vec![usize::MAX; width * height];
        for (v, &(r, c)) in grid_pos.iter().enumerate() {
            if r >= height || c >= width {
                return Err(Error::Validation(format!("grid position ({r}, {c}) outside {height}x{width}")));
            }
            if lookup[r * width + c] != usize::MAX {
                return Err(Error::Validation(format!("two vertices share grid position ({r}, {c})")));
            }
            lookup[r * width + c] = v;
        }
        let rad = radius as isize;
        let scale = 1.0 / radius as f64;
        let mut offsets = Vec::with_capacity(grid_pos.len() + 1);
        let mut neighbors = Vec::new();
        let mut coords = Vec::new();
        offsets.push(0);
        for &(r, c) in grid_pos {
            for dr in -rad..=rad {
                for dc in -rad..=rad {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= height as isize || cc >= width as isize {
                        continue;
                    }
                    let y = lookup[rr as usize * width + cc as usize];
                    if y != usize::MAX {
                        neighbors.push(y);
                        coords.push([dr as f64 * scale, dc as f64 * scale]);
                    }
                }
            }
            offsets.push(neighbors.len());
        }
        let n = grid_pos.len();
        let mut count = vec![0usize; n + 1];
        for &y in &neighbors {
            count[y + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let rev_offsets = count.clone();
        let mut rev_entries = vec![0usize; neighbors.len()];
        for (e, &y) in neighbors.iter().enumerate() {
            rev_entries[count[y]] = e;
            count[y] += 1;
        }
        Ok(PseudoCoords { radius, offsets, neighbors, coords, rev_offsets, rev_entries })
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn entry_range(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.entry_range(v)]
    }

    pub fn coords(&self, v: usize) -> &[[f64; 2]] {
        &self.coords[self.entry_range(v)]
    }

    /// Largest neighbourhood size.
    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count()).map(|v| self.offsets[v + 1] - self.offsets[v]).max().unwrap_or(0)
    }

    /// Global entry indices whose neighbour is `y`.
    pub(crate) fn entries_pointing_at(&self, y: usize) -> &[usize] {
        &self.rev_entries[self.rev_offsets[y]..self.rev_offsets[y + 1]]
    }

    /// Owner vertex of a global entry index.
    pub(crate) fn owner_of(&self, entry: usize) -> usize {
        self.offsets.partition_point(|&o| o <= entry) - 1
    }

    /// Block-diagonal union of two neighbourhood sets; vertices of `other`
    /// come after those of `self`.
    pub fn concat(&self, other: &PseudoCoords) -> PseudoCoords {
        assert_eq!(self.radius, other.radius, "radii must match");
        let n = self.vertex_count();
        let e = self.neighbors.len();
        let mut out = self.clone();
        out.offsets.extend(other.offsets[1..].iter().map(|o| o + e));
        out.neighbors.extend(other.neighbors.iter().map(|y| y + n));
        out.coords.extend_from_slice(&other.coords);
        out.rev_offsets.extend(other.rev_offsets[1..].iter().map(|o| o + e));
        out.rev_entries.extend(other.rev_entries.iter().map(|x| x + e));
        out
    }
}
