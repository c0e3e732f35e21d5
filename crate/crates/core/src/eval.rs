//! Localization quality: peak distances, top-traffic detection and weight CDFs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point};
use crate::kpi::WeightMap;

const NORMALIZED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotspotPeak {
    pub position: Point,
    pub weight: f64,
}

/// Greedy peak picking: take the heaviest pixel, suppress everything within
/// `radius` meters of it, repeat. Zero-weight pixels are never peaks.
pub fn extract_peaks(map: &WeightMap, spec: &GridSpec, count: usize, radius: f64) -> Result<Vec<HotspotPeak>> {
    map.ensure_grid(spec)?;
    if count == 0 || !(radius >= 0.0) {
        return Err(Error::InvalidInput("need count >= 1 and radius >= 0".into()));
    }
    let mut order: Vec<usize> = (0..map.len()).filter(|&k| map.get(k) > 0.0).collect();
    order.sort_by(|&a, &b| map.get(b).total_cmp(&map.get(a)).then(a.cmp(&b)));
    let mut peaks: Vec<HotspotPeak> = Vec::with_capacity(count);
    for idx in order {
        let p = spec.center(spec.pixel(idx));
        if peaks.iter().all(|q| q.position.distance(&p) > radius) {
            peaks.push(HotspotPeak {
                position: p,
                weight: map.get(idx),
            });
            if peaks.len() == count {
                break;
            }
        }
    }
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPair {
    pub generated: Point,
    pub estimated: Point,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakMatching {
    /// In the order of the generated list.
    pub pairs: Vec<PeakPair>,
    /// Generated peaks left without an estimated partner.
    pub unmatched: usize,
    pub mean_distance: f64,
}

/// One-to-one matching, greedily by increasing distance.
pub fn match_and_measure(generated: &[HotspotPeak], estimated: &[HotspotPeak]) -> Result<PeakMatching> {
    if generated.is_empty() || estimated.is_empty() {
        return Err(Error::InvalidInput("peak lists must be non-empty".into()));
    }
    let mut candidates: Vec<(f64, usize, usize)> = generated
        .iter()
        .enumerate()
        .flat_map(|(g, gp)| {
            estimated
                .iter()
                .enumerate()
                .map(move |(e, ep)| (gp.position.distance(&ep.position), g, e))
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gen_match: Vec<Option<(usize, f64)>> = vec![None; generated.len()];
    let mut est_used = vec![false; estimated.len()];
    for (d, g, e) in candidates {
        if gen_match[g].is_none() && !est_used[e] {
            gen_match[g] = Some((e, d));
            est_used[e] = true;
        }
    }
    let pairs: Vec<PeakPair> = gen_match
        .iter()
        .enumerate()
        .filter_map(|(g, m)| {
            m.map(|(e, d)| PeakPair {
                generated: generated[g].position,
                estimated: estimated[e].position,
                distance: d,
            })
        })
        .collect();
    let mean_distance = pairs.iter().map(|p| p.distance).sum::<f64>() / pairs.len() as f64;
    Ok(PeakMatching {
        unmatched: generated.len() - pairs.len(),
        pairs,
        mean_distance,
    })
}

fn ensure_normalized(map: &WeightMap) -> Result<()> {
    let sum = map.sum();
    if (sum - 1.0).abs() > NORMALIZED_TOL {
        return Err(Error::Unnormalized { sum });
    }
    Ok(())
}

/// Estimated mass on the smallest set of heaviest real pixels holding a
/// fraction `p` of the real traffic.
pub fn detection_percentage(real: &WeightMap, estimated: &WeightMap, p: f64) -> Result<f64> {
    real.ensure_same_grid(estimated)?;
    ensure_normalized(real)?;
    ensure_normalized(estimated)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("p must be in (0, 1], got {p}")));
    }
    let mut order: Vec<usize> = (0..real.len()).collect();
    order.sort_by(|&a, &b| real.get(b).total_cmp(&real.get(a)).then(a.cmp(&b)));
    let (mut covered, mut detected) = (0.0, 0.0);
    for idx in order {
        if covered >= p {
            break;
        }
        covered += real.get(idx);
        detected += estimated.get(idx);
    }
    Ok(detected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub weight: f64,
    pub fraction: f64,
}

/// Empirical CDF of pixel weights at each distinct weight.
pub fn weight_cdf(map: &WeightMap) -> Vec<CdfPoint> {
    let mut v = map.values().to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (k, &w) in v.iter().enumerate() {
        let fraction = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.weight == w => last.fraction = fraction,
            _ => out.push(CdfPoint { weight: w, fraction }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub peak_count: usize,
    pub suppression_radius_m: f64,
    /// Top-traffic fractions for the detection table.
    pub p_list: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            peak_count: 9,
            suppression_radius_m: 150.0,
            p_list: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub p: f64,
    pub detected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub peaks: Vec<HotspotPeak>,
    pub matching: PeakMatching,
    pub detection: Vec<DetectionRow>,
    pub cdf: Vec<CdfPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub truth_peaks: Vec<HotspotPeak>,
    pub truth_cdf: Vec<CdfPoint>,
    pub variants: Vec<VariantReport>,
}

impl EvalReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }
}

/// Runs every instrument on each named estimate. Maps are scaled to unit sum
/// before detection and CDFs.
pub fn compare_variants(
    truth: &WeightMap,
    runs: &[(String, WeightMap)],
    spec: &GridSpec,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let real = truth.normalized();
    let truth_peaks = extract_peaks(&real, spec, config.peak_count, config.suppression_radius_m)?;
    let variants = runs
        .iter()
        .map(|(name, map)| {
            let est = map.normalized();
            let peaks = extract_peaks(&est, spec, config.peak_count, config.suppression_radius_m)?;
            if peaks.is_empty() {
                return Err(Error::InvalidInput(format!("variant {name} is an all-zero map")));
            }
            let matching = match_and_measure(&truth_peaks, &peaks)?;
            let detection = config
                .p_list
                .iter()
                .map(|&p| Ok(DetectionRow { p, detected: detection_percentage(&real, &est, p)? }))
                .collect::<Result<_>>()?;
            Ok(VariantReport {
                name: name.clone(),
                peaks,
                matching,
                detection,
                cdf: weight_cdf(&est),
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        truth_peaks,
        truth_cdf: weight_cdf(&real),
        variants,
    })
}
