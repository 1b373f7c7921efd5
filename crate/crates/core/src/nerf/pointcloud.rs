use std::io::Write;
use std::path::Path;

use super::field::{Activations, RadianceField};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Vec3,
    pub color: [f64; 3],
}

/// Voxel centers of a `resolution³` grid over `bounds` where the field's
/// density exceeds `sigma_threshold`, in x-fastest order.
pub fn extract_point_cloud(
    field: &RadianceField,
    bounds: &Aabb,
    resolution: usize,
    sigma_threshold: f64,
) -> Result<Vec<CloudPoint>> {
    if resolution < 2 {
        return Err(Error::validation("resolution", "must be at least 2"));
    }
    let ext = bounds.extent();
    let step = ext.map(|e| e / resolution as f64);
    let mut cloud = Vec::new();
    let mut act = Activations::default();
    let mut slab = Vec::with_capacity(resolution * resolution);
    for k in 0..resolution {
        slab.clear();
        for j in 0..resolution {
            for i in 0..resolution {
                slab.push([
                    bounds.min[0] + (i as f64 + 0.5) * step[0],
                    bounds.min[1] + (j as f64 + 0.5) * step[1],
                    bounds.min[2] + (k as f64 + 0.5) * step[2],
                ]);
            }
        }
        field.forward(&slab, &mut act);
        for (n, p) in slab.iter().enumerate() {
            if act.sigma(n) > sigma_threshold {
                cloud.push(CloudPoint {
                    position: *p,
                    color: act.color(n),
                });
            }
        }
    }
    Ok(cloud)
}

/// ASCII PLY with float positions and 8-bit vertex colors.
pub fn write_ply(points: &[CloudPoint], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(64 + points.len() * 48);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", points.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n");
    for p in points {
        let c = p.color.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            p.position[0] as f32, p.position[1] as f32, p.position[2] as f32, c[0], c[1], c[2]
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nerf::field::FieldArch;

    fn zero_field() -> RadianceField {
        RadianceField::zeros(FieldArch::default(), Aabb::new([-1.0; 3], [1.0; 3]), [0.0; 3]).unwrap()
    }

    #[test]
    fn zero_field_is_empty() {
        let f = zero_field();
        assert!(extract_point_cloud(&f, f.bounds(), 8, 5.0).unwrap().is_empty());
    }

    #[test]
    fn resolution_two_gives_at_most_eight() {
        let f = zero_field();
        let cloud = extract_point_cloud(&f, f.bounds(), 2, 0.0).unwrap();
        assert_eq!(cloud.len(), 8);
        assert!(extract_point_cloud(&f, f.bounds(), 1, 0.0).is_err());
    }

    #[test]
    fn ply_header_counts_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let pts = vec![
            CloudPoint {
                position: [0.0, 1.0, 2.0],
                color: [1.0, 0.5, 0.0],
            };
            3
        ];
        write_ply(&pts, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("element vertex 3\n"));
        assert_eq!(text.lines().filter(|l| *l == "0 1 2 255 128 0").count(), 3);
    }
}
