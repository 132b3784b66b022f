use std::collections::{BTreeMap, HashMap};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::geometry::{HomogeneousPoint2, PointMatch};

/// A quantized keypoint in one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrackNode {
    pub view: usize,
    pub qx: i64,
    pub qy: i64,
}

impl TrackNode {
    fn quantize(view: usize, p: &HomogeneousPoint2, q: f64) -> Self {
        Self {
            view,
            qx: (p.x / q).floor() as i64,
            qy: (p.y / q).floor() as i64,
        }
    }
}

/// Connected components of the match graph. Each track is sorted and the
/// track list is sorted, so equal partitions compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackGraph {
    pub tracks: Vec<Vec<TrackNode>>,
}

impl TrackGraph {
    /// Number of distinct views in each track.
    pub fn lengths(&self) -> Vec<usize> {
        self.tracks
            .iter()
            .map(|t| {
                let mut views: Vec<usize> = t.iter().map(|n| n.view).collect();
                views.dedup();
                views.len()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackStats {
    pub mean_length: f64,
    pub count: usize,
    pub histogram: BTreeMap<usize, usize>,
}

/// Union-find over quantized keypoints. Matches between a view and itself
/// are ignored.
pub fn build_tracks(
    pairwise: &[((usize, usize), Vec<PointMatch>)],
    quantize_px: f64,
) -> TrackGraph {
    let mut ids: HashMap<TrackNode, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |n: TrackNode| {
        *ids.entry(n).or_insert_with(|| {
            nodes.push(n);
            nodes.len() - 1
        })
    };
    for &((va, vb), ref matches) in pairwise {
        if va == vb {
            continue;
        }
        for m in matches {
            let a = intern(TrackNode::quantize(va, &m.a, quantize_px));
            let b = intern(TrackNode::quantize(vb, &m.b, quantize_px));
            edges.push((a, b));
        }
    }
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut components: HashMap<usize, Vec<TrackNode>> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        components.entry(uf.find(i)).or_default().push(*n);
    }
    let mut tracks: Vec<Vec<TrackNode>> = components
        .into_values()
        .map(|mut t| {
            t.sort_unstable();
            t
        })
        .collect();
    tracks.sort_unstable();
    TrackGraph { tracks }
}

pub fn track_stats(g: &TrackGraph) -> TrackStats {
    let lengths = g.lengths();
    let mut histogram = BTreeMap::new();
    for &l in &lengths {
        *histogram.entry(l).or_insert(0) += 1;
    }
    let mean_length = if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
    };
    TrackStats {
        mean_length,
        count: lengths.len(),
        histogram,
    }
}
