//! Structure-from-motion model primitives: 3D points, database images and
//! the bipartite point-image visibility graph consumed by every filtering
//! stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A reconstructed 3D point. Ids are dense: `points[i].id == i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    pub id: u32,
    pub position: [f64; 3],
}

/// A database image, reduced to the set of point ids it observes.
/// Camera poses of database images are not needed by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseImage {
    pub id: u32,
    pub observed_points: Vec<u32>,
}

/// Bipartite visibility graph between 3D points and database images.
///
/// Adjacency is stored in both directions, sorted by id, and is immutable
/// after construction; concurrent reads need no synchronization.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityGraph {
    point_images: Vec<Vec<u32>>,
    image_points: Vec<Vec<u32>>,
    edge_count: usize,
}

impl VisibilityGraph {
    pub fn num_points(&self) -> usize {
        self.point_images.len()
    }

    pub fn num_images(&self) -> usize {
        self.image_points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Images observing point `p`, ascending by image id.
    pub fn images_of_point(&self, p: u32) -> &[u32] {
        &self.point_images[p as usize]
    }

    /// Points observed by image `d`, ascending by point id.
    pub fn points_of_image(&self, d: u32) -> &[u32] {
        &self.image_points[d as usize]
    }

    /// Edges as (point, image) pairs in (point asc, image asc) order; the
    /// canonical serialization order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.point_images
            .iter()
            .enumerate()
            .flat_map(|(p, imgs)| imgs.iter().map(move |&d| (p as u32, d)))
    }

    /// Rebuild a graph from raw edges; used by the container reader.
    /// `num_images` is inferred from the largest image id.
    pub(crate) fn from_edges(num_points: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let num_images = edges.iter().map(|&(_, d)| d as usize + 1).max().unwrap_or(0);
        let mut point_images = vec![Vec::new(); num_points];
        let mut image_points = vec![Vec::new(); num_images];
        for &(p, d) in edges {
            if p as usize >= num_points {
                return Err(Error::Container(format!("edge references point {p} out of range")));
            }
            point_images[p as usize].push(d);
            image_points[d as usize].push(p);
        }
        for adj in point_images.iter_mut().chain(image_points.iter_mut()) {
            adj.sort_unstable();
            adj.dedup();
        }
        let edge_count: usize = point_images.iter().map(Vec::len).sum();
        Ok(Self { point_images, image_points, edge_count })
    }
}

/// Validates the model structure and builds the bidirectional adjacency.
///
/// Point and image ids must be dense (`id == index`); every image must
/// observe at least one existing point, without duplicates.
pub fn build_visibility_graph(
    points: &[Point3D],
    images: &[DatabaseImage],
) -> Result<VisibilityGraph> {
    for (i, p) in points.iter().enumerate() {
        if p.id as usize != i {
            return Err(Error::InvalidModel(format!(
                "point ids must be dense: index {i} has id {}",
                p.id
            )));
        }
        if !p.position.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidModel(format!("point {} has non-finite position", p.id)));
        }
    }

    let mut point_images = vec![Vec::new(); points.len()];
    let mut image_points = Vec::with_capacity(images.len());
    let mut edge_count = 0usize;

    for (i, img) in images.iter().enumerate() {
        if img.id as usize != i {
            return Err(Error::InvalidModel(format!(
                "image ids must be dense: index {i} has id {}",
                img.id
            )));
        }
        if img.observed_points.is_empty() {
            return Err(Error::InvalidModel(format!("image {} observes no points", img.id)));
        }
        let mut observed = img.observed_points.clone();
        observed.sort_unstable();
        if observed.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidModel(format!(
                "image {} lists duplicate observed points",
                img.id
            )));
        }
        for &p in &observed {
            if p as usize >= points.len() {
                return Err(Error::InvalidModel(format!(
                    "image {} references unknown point {p}",
                    img.id
                )));
            }
            point_images[p as usize].push(img.id);
        }
        edge_count += observed.len();
        image_points.push(observed);
    }

    // Image ids were visited in ascending order, so per-point lists are
    // already sorted.
    Ok(VisibilityGraph { point_images, image_points, edge_count })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(n: u32) -> Vec<Point3D> {
        (0..n).map(|id| Point3D { id, position: [id as f64, 0.0, 0.0] }).collect()
    }

    #[test]
    fn adjacency_is_symmetric_and_counted() {
        let imgs = vec![
            DatabaseImage { id: 0, observed_points: vec![0, 1] },
            DatabaseImage { id: 1, observed_points: vec![1, 2] },
        ];
        let g = build_visibility_graph(&points(3), &imgs).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.images_of_point(1), &[0, 1]);
        assert_eq!(g.points_of_image(0), &[0, 1]);
        // symmetry both ways
        for (p, d) in g.edges() {
            assert!(g.images_of_point(p).contains(&d));
            assert!(g.points_of_image(d).contains(&p));
        }
    }

    #[test]
    fn empty_image_list_gives_empty_graph() {
        let g = build_visibility_graph(&points(3), &[]).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.num_images(), 0);
    }

    #[test]
    fn dangling_point_reference_is_rejected() {
        let imgs = vec![DatabaseImage { id: 0, observed_points: vec![0, 99] }];
        let err = build_visibility_graph(&points(10), &imgs).unwrap_err();
        assert!(err.to_string().contains("image 0"), "{err}");
        assert!(err.to_string().contains("99"), "{err}");
    }

    #[test]
    fn zero_observation_image_is_rejected() {
        let imgs = vec![DatabaseImage { id: 0, observed_points: vec![] }];
        assert!(build_visibility_graph(&points(2), &imgs).is_err());
    }

    #[test]
    fn duplicate_observation_is_rejected() {
        let imgs = vec![DatabaseImage { id: 0, observed_points: vec![1, 1] }];
        assert!(build_visibility_graph(&points(2), &imgs).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        let imgs = vec![
            DatabaseImage { id: 0, observed_points: vec![2, 0, 1] },
            DatabaseImage { id: 1, observed_points: vec![3, 2] },
        ];
        let a = build_visibility_graph(&points(4), &imgs).unwrap();
        let b = build_visibility_graph(&points(4), &imgs).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points_of_image(0), &[0, 1, 2]);
    }

    #[test]
    fn round_trip_through_edges() {
        let imgs = vec![
            DatabaseImage { id: 0, observed_points: vec![0, 1] },
            DatabaseImage { id: 1, observed_points: vec![1, 2] },
        ];
        let g = build_visibility_graph(&points(3), &imgs).unwrap();
        let edges: Vec<(u32, u32)> = g.edges().collect();
        let g2 = VisibilityGraph::from_edges(3, &edges).unwrap();
        assert_eq!(g, g2);
    }
}
