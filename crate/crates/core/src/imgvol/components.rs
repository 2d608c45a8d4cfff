use serde::{Deserialize, Serialize};

use super::Mask;

/// Voxel adjacency used for component labelling and neighbourhood scans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Faces, edges and corners.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    pub fn offsets(self) -> &'static [[isize; 3]] {
        match self {
            Connectivity::Six => &FACE_OFFSETS,
            Connectivity::TwentySix => &FULL_OFFSETS,
        }
    }
}

const FACE_OFFSETS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

const FULL_OFFSETS: [[isize; 3]; 26] = {
    let mut out = [[0isize; 3]; 26];
    let mut k = 0;
    let mut z = -1;
    while z <= 1 {
        let mut y = -1;
        while y <= 1 {
            let mut x = -1;
            while x <= 1 {
                if !(x == 0 && y == 0 && z == 0) {
                    out[k] = [x, y, z];
                    k += 1;
                }
                x += 1;
            }
            y += 1;
        }
        z += 1;
    }
    out
};

/// Connected components of a mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentSet {
    pub count: usize,
    /// Component id per voxel; 0 for voxels outside the mask, 1..=count otherwise.
    pub labels: Vec<u32>,
    /// `sizes[id - 1]` is the voxel count of component `id`.
    pub sizes: Vec<usize>,
}

impl ComponentSet {
    pub fn size_of(&self, id: u32) -> usize {
        self.sizes[id as usize - 1]
    }
}

/// Labels maximal connected regions of `mask` by breadth-first flood fill.
/// Ids are assigned in order of each component's first voxel in storage order.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> ComponentSet {
    let geom = *mask.geometry();
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; geom.len()];
    let mut sizes = Vec::new();
    let mut queue = Vec::new();

    for seed in 0..geom.len() {
        if !mask.get(seed) || labels[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[seed] = id;
        queue.clear();
        queue.push(seed);
        let mut head = 0;
        while head < queue.len() {
            let cur = queue[head];
            head += 1;
            let c = geom.coords(cur);
            for &off in offsets {
                if let Some(n) = geom.offset(c, off) {
                    if mask.get(n) && labels[n] == 0 {
                        labels[n] = id;
                        queue.push(n);
                    }
                }
            }
        }
        sizes.push(queue.len());
    }
    ComponentSet {
        count: sizes.len(),
        labels,
        sizes,
    }
}
