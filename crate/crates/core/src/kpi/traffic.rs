//! Ground-truth traffic maps and user-authored potential-hotspot maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{MapLabel, WeightMap};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotspotComponent {
    pub center: Point,
    /// Spatial spread in meters.
    pub sigma: f64,
    pub amplitude: f64,
}

/// Clustered traffic: an exponentiated sum of Gaussian bumps over a uniform floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub components: Vec<HotspotComponent>,
    #[serde(default)]
    pub floor: f64,
    /// Standard deviation of the per-pixel log-domain noise; 0 disables it.
    #[serde(default)]
    pub noise_std: f64,
}

impl TrafficModel {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() && self.floor <= 0.0 {
            return Err(Error::config("traffic", "needs at least one component or a positive floor"));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::config("traffic.floor", "must be finite and >= 0"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("traffic.noise_std", "must be finite and >= 0"));
        }
        for (k, c) in self.components.iter().enumerate() {
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::config(format!("traffic.components[{k}].sigma"), "must be > 0"));
            }
            if !(c.amplitude > 0.0 && c.amplitude.is_finite()) {
                return Err(Error::config(format!("traffic.components[{k}].amplitude"), "must be > 0"));
            }
        }
        Ok(())
    }

    /// Unnormalized weight at a point for a given log-domain noise sample.
    pub fn intensity(&self, p: Point, noise: f64) -> f64 {
        let log_sum: f64 = self
            .components
            .iter()
            .map(|c| {
                let d2 = (p.x - c.center.x).powi(2) + (p.y - c.center.y).powi(2);
                c.amplitude * (-d2 / (2.0 * c.sigma * c.sigma)).exp()
            })
            .sum();
        ((log_sum + noise).exp() - 1.0 + self.floor).max(0.0)
    }
}

/// Normalized ground-truth traffic map. Noise is drawn per pixel in flat order.
pub fn generate_ground_truth(model: &TrafficModel, spec: &GridSpec, seed: u64) -> Result<WeightMap> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (model.noise_std > 0.0)
        .then(|| Normal::new(0.0, model.noise_std).expect("validated std"));
    let values: Vec<f64> = spec
        .pixels()
        .map(|px| {
            let g = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            model.intensity(spec.center(px), g)
        })
        .collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateTrafficModel);
    }
    let values = values.into_iter().map(|v| v / total).collect();
    WeightMap::for_grid(spec, MapLabel::GroundTruth, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ZoneShape {
    Disk { center: Point, radius: f64 },
    Rect { min: Point, max: Point },
}

impl ZoneShape {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            ZoneShape::Disk { center, radius } => center.distance(&p) <= *radius,
            ZoneShape::Rect { min, max } => min.x <= p.x && p.x <= max.x && min.y <= p.y && p.y <= max.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialZone {
    #[serde(flatten)]
    pub shape: ZoneShape,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PotentialHotspotSpec {
    pub zones: Vec<PotentialZone>,
}

impl PotentialHotspotSpec {
    pub fn validate(&self) -> Result<()> {
        for (k, z) in self.zones.iter().enumerate() {
            let path = format!("potential.zones[{k}]");
            if !(z.importance >= 0.0 && z.importance.is_finite()) {
                return Err(Error::config(format!("{path}.importance"), "must be finite and >= 0"));
            }
            match &z.shape {
                ZoneShape::Disk { radius, .. } if !(*radius > 0.0) => {
                    return Err(Error::config(format!("{path}.radius"), "must be > 0"));
                }
                ZoneShape::Rect { min, max } if !(min.x < max.x && min.y < max.y) => {
                    return Err(Error::config(path, "rectangle is degenerate"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Rasterizes potential zones by pixel center; overlapping zones keep the largest importance.
pub fn rasterize_potential_map(spec: &PotentialHotspotSpec, grid: &GridSpec) -> Result<WeightMap> {
    spec.validate()?;
    let values = grid
        .pixels()
        .map(|px| {
            let c = grid.center(px);
            spec.zones
                .iter()
                .filter(|z| z.shape.contains(c))
                .map(|z| z.importance)
                .fold(0.0, f64::max)
        })
        .collect();
    WeightMap::for_grid(grid, MapLabel::Potential, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: usize) -> GridSpec {
        GridSpec::new(m, 10.0, Point::new(0.0, 0.0)).unwrap()
    }

    fn bump(x: f64, y: f64) -> HotspotComponent {
        HotspotComponent {
            center: Point::new(x, y),
            sigma: 15.0,
            amplitude: 2.0,
        }
    }

    #[test]
    fn single_bump_peaks_at_center() {
        let s = spec(11);
        let model = TrafficModel {
            components: vec![bump(55.0, 55.0)],
            floor: 0.0,
            noise_std: 0.0,
        };
        let map = generate_ground_truth(&model, &s, 0).unwrap();
        assert_eq!(s.pixel(map.argmax()), crate::grid::Pixel::new(5, 5));
        assert!((map.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_only_is_uniform() {
        let s = spec(6);
        let model = TrafficModel {
            components: vec![],
            floor: 0.3,
            noise_std: 0.0,
        };
        let map = generate_ground_truth(&model, &s, 7).unwrap();
        assert!(map.values().iter().all(|&v| (v - 1.0 / 36.0).abs() < 1e-15));
    }

    #[test]
    fn two_far_bumps_give_two_local_maxima() {
        let s = spec(20);
        let model = TrafficModel {
            components: vec![bump(45.0, 45.0), bump(145.0, 145.0)],
            floor: 0.0,
            noise_std: 0.0,
        };
        let map = generate_ground_truth(&model, &s, 0).unwrap();
        // brute-force strict local maxima over the 8-neighborhood
        let m = s.m as isize;
        let mut maxima = vec![];
        for i in 0..m {
            for j in 0..m {
                let v = map.get((i * m + j) as usize);
                let mut is_max = v > 0.0;
                for di in -1..=1 {
                    for dj in -1..=1 {
                        let (a, b) = (i + di, j + dj);
                        if (di, dj) != (0, 0) && (0..m).contains(&a) && (0..m).contains(&b) {
                            is_max &= v > map.get((a * m + b) as usize);
                        }
                    }
                }
                if is_max {
                    maxima.push((i, j));
                }
            }
        }
        assert_eq!(maxima, vec![(4, 4), (14, 14)]);
    }

    #[test]
    fn noise_is_seeded() {
        let s = spec(8);
        let model = TrafficModel {
            components: vec![bump(40.0, 40.0)],
            floor: 0.01,
            noise_std: 0.2,
        };
        let a = generate_ground_truth(&model, &s, 3).unwrap();
        let b = generate_ground_truth(&model, &s, 3).unwrap();
        let c = generate_ground_truth(&model, &s, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_model_rejected() {
        let s = spec(4);
        let model = TrafficModel {
            components: vec![],
            floor: 0.0,
            noise_std: 0.0,
        };
        assert!(generate_ground_truth(&model, &s, 0).is_err());
    }

    #[test]
    fn potential_maps() {
        let s = spec(10);
        let empty = rasterize_potential_map(&PotentialHotspotSpec::default(), &s).unwrap();
        assert_eq!(empty.sum(), 0.0);

        let disk = PotentialZone {
            shape: ZoneShape::Disk {
                center: Point::new(25.0, 25.0),
                radius: 10.0,
            },
            importance: 0.5,
        };
        let one = PotentialHotspotSpec { zones: vec![disk.clone()] };
        let map = rasterize_potential_map(&one, &s).unwrap();
        // centers within 10 m of (25,25): (2,2) and its four axis neighbors
        let hit: Vec<_> = (0..100).filter(|&k| map.get(k) > 0.0).collect();
        assert_eq!(hit, vec![12, 21, 22, 23, 32]);
        assert!(hit.iter().all(|&k| map.get(k) == 0.5));

        let rect = PotentialZone {
            shape: ZoneShape::Rect {
                min: Point::new(20.0, 20.0),
                max: Point::new(40.0, 30.0),
            },
            importance: 0.9,
        };
        let both = PotentialHotspotSpec { zones: vec![disk, rect] };
        let map = rasterize_potential_map(&both, &s).unwrap();
        assert_eq!(map.get(22), 0.9);
        assert_eq!(map.get(32), 0.9);
        assert_eq!(map.get(12), 0.5);
        assert_eq!(map.get(21), 0.5);
        assert_eq!(map.get(42), 0.0);
    }

    #[test]
    fn potential_validation() {
        let bad = PotentialHotspotSpec {
            zones: vec![PotentialZone {
                shape: ZoneShape::Disk {
                    center: Point::default(),
                    radius: 0.0,
                },
                importance: 1.0,
            }],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn potential_json_shape() {
        let json = r#"{"zones":[{"shape":"disk","center":{"x":1.0,"y":2.0},"radius":3.0,"importance":0.8}]}"#;
        let spec: PotentialHotspotSpec = serde_json::from_str(json).unwrap();
        assert_eq!(serde_json::to_string(&spec).unwrap(), json);
    }
}
