//! File formats for every pipeline artifact.
//!
//! Floats are written in shortest round-trip form, so reading a written file
//! reproduces the in-memory value exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::grid::{CellInfo, CoverageGrid, GridSpec, Point, NO_COVERAGE};
use crate::kpi::{MapLabel, WeightMap};

const GRID_HEADER: [&str; 5] = ["m", "pixel_size", "origin_x", "origin_y", "q_rxlevmin_dbm"];
const CELL_HEADER: [&str; 5] = ["id", "x", "y", "azimuth_deg", "neighbors"];
const RSRP_HEADER: [&str; 4] = ["cell_id", "i", "j", "rsrp_dbm"];
const MAP_HEADER: [&str; 3] = ["m", "pixel_size", "label"];
const WEIGHT_HEADER: [&str; 3] = ["i", "j", "weight"];

fn num(v: f64) -> String {
    format!("{v}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    WriterBuilder::new().flexible(true).has_headers(false).from_writer(out)
}

struct Records<R: Read> {
    inner: csv::StringRecordsIntoIter<R>,
}

impl<R: Read> Records<R> {
    fn new(input: R) -> Self {
        let inner = ReaderBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_reader(input)
            .into_records();
        Records { inner }
    }

    fn next(&mut self) -> Result<Option<(u64, StringRecord)>> {
        match self.inner.next() {
            None => Ok(None),
            Some(r) => {
                let r = r?;
                let line = r.position().map_or(0, |p| p.line());
                Ok(Some((line, r)))
            }
        }
    }

    fn expect(&mut self, what: &str) -> Result<(u64, StringRecord)> {
        self.next()?.ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn header(&mut self, names: &[&str]) -> Result<()> {
        let (line, r) = self.expect("a header")?;
        if r.iter().ne(names.iter().copied()) {
            return Err(Error::Parse {
                line,
                msg: format!("expected header `{}`", names.join(",")),
            });
        }
        Ok(())
    }
}

fn field<T: std::str::FromStr>(r: &StringRecord, line: u64, k: usize, name: &str) -> Result<T> {
    let raw = r.get(k).ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing field `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad value `{raw}` for `{name}`"),
    })
}

fn arity(r: &StringRecord, line: u64, n: usize) -> Result<()> {
    if r.len() != n {
        return Err(Error::Parse {
            line,
            msg: format!("expected {n} fields, found {}", r.len()),
        });
    }
    Ok(())
}

/// Writes a coverage grid: geometry line, cell table, then one row per covered
/// (cell, pixel) pair.
pub fn write_grid<W: Write>(grid: &CoverageGrid, out: W) -> Result<()> {
    let mut w = writer(out);
    let s = &grid.spec;
    w.write_record(GRID_HEADER)?;
    w.write_record([
        s.m.to_string(),
        num(s.pixel_size),
        num(s.origin.x),
        num(s.origin.y),
        num(grid.q_rxlevmin),
    ])?;
    w.write_record(CELL_HEADER)?;
    for c in &grid.cells {
        w.write_record([
            c.id.clone(),
            num(c.position.x),
            num(c.position.y),
            num(c.azimuth_deg),
            c.neighbors.join(" "),
        ])?;
    }
    w.write_record(RSRP_HEADER)?;
    for (k, c) in grid.cells.iter().enumerate() {
        for px in s.pixels() {
            let v = grid.rsrp[k][s.index(px)];
            if v != NO_COVERAGE {
                w.write_record([c.id.clone(), px.i.to_string(), px.j.to_string(), num(v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid<R: Read>(input: R) -> Result<CoverageGrid> {
    let mut rec = Records::new(input);
    rec.header(&GRID_HEADER)?;
    let (line, r) = rec.expect("grid geometry")?;
    arity(&r, line, 5)?;
    let spec = GridSpec::new(
        field(&r, line, 0, "m")?,
        field(&r, line, 1, "pixel_size")?,
        Point::new(field(&r, line, 2, "origin_x")?, field(&r, line, 3, "origin_y")?),
    )?;
    let q_rxlevmin: f64 = field(&r, line, 4, "q_rxlevmin_dbm")?;
    rec.header(&CELL_HEADER)?;

    let mut cells: Vec<CellInfo> = Vec::new();
    loop {
        let (line, r) = rec.expect("cell rows or the RSRP header")?;
        if r.iter().eq(RSRP_HEADER.iter().copied()) {
            break;
        }
        arity(&r, line, 5)?;
        cells.push(CellInfo {
            id: r[0].to_string(),
            position: Point::new(field(&r, line, 1, "x")?, field(&r, line, 2, "y")?),
            azimuth_deg: field(&r, line, 3, "azimuth_deg")?,
            neighbors: r[4].split_whitespace().map(str::to_string).collect(),
        });
    }

    let mut rsrp = vec![vec![NO_COVERAGE; spec.len()]; cells.len()];
    let ids: std::collections::HashMap<&str, usize> =
        cells.iter().enumerate().map(|(k, c)| (c.id.as_str(), k)).collect();
    while let Some((line, r)) = rec.next()? {
        arity(&r, line, 4)?;
        let k = *ids.get(&r[0]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown cell `{}`", &r[0]),
        })?;
        let (i, j): (usize, usize) = (field(&r, line, 1, "i")?, field(&r, line, 2, "j")?);
        if i >= spec.m || j >= spec.m {
            return Err(Error::Parse {
                line,
                msg: format!("pixel ({i}, {j}) outside a {0}x{0} grid", spec.m),
            });
        }
        let slot = &mut rsrp[k][spec.index(crate::grid::Pixel::new(i, j))];
        if *slot != NO_COVERAGE {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate RSRP for cell `{}` at ({i}, {j})", &r[0]),
            });
        }
        *slot = field(&r, line, 3, "rsrp_dbm")?;
    }
    CoverageGrid::new(spec, cells, rsrp, q_rxlevmin)
}

/// Writes every pixel of a weight map, zeros included.
pub fn write_weight_map<W: Write>(map: &WeightMap, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(MAP_HEADER)?;
    w.write_record([map.m.to_string(), num(map.pixel_size), map.label.to_string()])?;
    w.write_record(WEIGHT_HEADER)?;
    for (idx, &v) in map.values().iter().enumerate() {
        w.write_record([(idx / map.m).to_string(), (idx % map.m).to_string(), num(v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a weight map; pixels without a row are 0.
pub fn read_weight_map<R: Read>(input: R) -> Result<WeightMap> {
    let mut rec = Records::new(input);
    rec.header(&MAP_HEADER)?;
    let (line, r) = rec.expect("map geometry")?;
    arity(&r, line, 3)?;
    let m: usize = field(&r, line, 0, "m")?;
    let pixel_size: f64 = field(&r, line, 1, "pixel_size")?;
    let label: MapLabel = field(&r, line, 2, "label")?;
    rec.header(&WEIGHT_HEADER)?;
    let mut values: Vec<Option<f64>> = vec![None; m * m];
    while let Some((line, r)) = rec.next()? {
        arity(&r, line, 3)?;
        let (i, j): (usize, usize) = (field(&r, line, 0, "i")?, field(&r, line, 1, "j")?);
        if i >= m || j >= m {
            return Err(Error::Parse {
                line,
                msg: format!("pixel ({i}, {j}) outside a {m}x{m} grid"),
            });
        }
        let slot = &mut values[i * m + j];
        if slot.is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate weight at ({i}, {j})"),
            });
        }
        *slot = Some(field(&r, line, 2, "weight")?);
    }
    WeightMap::from_values(m, pixel_size, label, values.into_iter().map(|v| v.unwrap_or(0.0)).collect())
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_grid_file(grid: &CoverageGrid, path: &Path) -> Result<()> {
    write_grid(grid, BufWriter::new(File::create(path)?))
}

pub fn read_grid_file(path: &Path) -> Result<CoverageGrid> {
    read_grid(BufReader::new(File::open(path)?))
}

pub fn write_weight_map_file(map: &WeightMap, path: &Path) -> Result<()> {
    write_weight_map(map, BufWriter::new(File::create(path)?))
}

pub fn read_weight_map_file(path: &Path) -> Result<WeightMap> {
    read_weight_map(BufReader::new(File::open(path)?))
}

/// `variant,gen_x,gen_y,est_x,est_y,dist_m` for every matched pair.
pub fn write_peaks_csv<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["variant", "gen_x", "gen_y", "est_x", "est_y", "dist_m"])?;
    for v in &report.variants {
        for p in &v.matching.pairs {
            w.write_record([
                v.name.clone(),
                num(p.generated.x),
                num(p.generated.y),
                num(p.estimated.x),
                num(p.estimated.y),
                num(p.distance),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_detection_csv<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["variant", "p", "detected"])?;
    for v in &report.variants {
        for row in &v.detection {
            w.write_record([v.name.clone(), num(row.p), num(row.detected)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The truth series is written under the variant name `truth`.
pub fn write_cdf_csv<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["variant", "weight", "fraction"])?;
    let series = std::iter::once(("truth", &report.truth_cdf)).chain(report.variants.iter().map(|v| (v.name.as_str(), &v.cdf)));
    for (name, cdf) in series {
        for c in cdf {
            w.write_record([name.to_string(), num(c.weight), num(c.fraction)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `report.json` plus the three plot-ready CSVs in `dir`.
pub fn write_eval_report(report: &EvalReport, dir: &Path) -> Result<()> {
    write_json(report, &dir.join("report.json"))?;
    write_peaks_csv(report, BufWriter::new(File::create(dir.join("peaks.csv"))?))?;
    write_detection_csv(report, BufWriter::new(File::create(dir.join("detection.csv"))?))?;
    write_cdf_csv(report, BufWriter::new(File::create(dir.join("cdf.csv"))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{gen_scenario, ScenarioConfig};

    #[test]
    fn grid_round_trip() {
        let mut c = ScenarioConfig::single_site();
        c.layout.shadowing_std_db = 3.0;
        let s = gen_scenario(&c).unwrap();
        let mut buf = Vec::new();
        write_grid(&s.grid, &mut buf).unwrap();
        let back = read_grid(buf.as_slice()).unwrap();
        assert_eq!(back, s.grid);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,pixel_size,origin_x,origin_y,q_rxlevmin_dbm\n60,25,-750,-750,-115\nid,x,y,azimuth_deg,neighbors\nS0A,0,0,0,"));
    }

    #[test]
    fn missing_rows_mean_no_coverage() {
        let text = "m,pixel_size,origin_x,origin_y,q_rxlevmin_dbm\n2,10,0,0,-115\nid,x,y,azimuth_deg,neighbors\nA,0,0,90,\ncell_id,i,j,rsrp_dbm\nA,1,0,-80.5\n";
        let g = read_grid(text.as_bytes()).unwrap();
        assert_eq!(g.rsrp(0, 2), Some(-80.5));
        assert_eq!(g.rsrp(0, 0), None);
        assert!(g.cells[0].neighbors.is_empty());
    }

    #[test]
    fn grid_parse_errors_carry_lines() {
        let text = "m,pixel_size,origin_x,origin_y,q_rxlevmin_dbm\n2,10,0,0,-115\nid,x,y,azimuth_deg,neighbors\nA,0,0,90,\ncell_id,i,j,rsrp_dbm\nB,1,0,-80.5\n";
        assert!(matches!(read_grid(text.as_bytes()), Err(Error::Parse { line: 6, .. })));
        let text = "m,pixel_size\n";
        assert!(matches!(read_grid(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn weight_map_round_trip() {
        let v: Vec<f64> = (0..9).map(|k| (k as f64 * 0.1).sin().abs() / 7.0).collect();
        let map = WeightMap::from_values(3, 25.0, MapLabel::Q3, v).unwrap();
        let mut buf = Vec::new();
        write_weight_map(&map, &mut buf).unwrap();
        assert_eq!(read_weight_map(buf.as_slice()).unwrap(), map);
        assert!(String::from_utf8(buf).unwrap().starts_with("m,pixel_size,label\n3,25,q3\ni,j,weight\n0,0,0\n"));
    }

    #[test]
    fn weight_map_rejects_duplicates_and_negatives() {
        let dup = "m,pixel_size,label\n2,25,fused\ni,j,weight\n0,0,1\n0,0,2\n";
        assert!(matches!(read_weight_map(dup.as_bytes()), Err(Error::Parse { line: 5, .. })));
        let neg = "m,pixel_size,label\n2,25,fused\ni,j,weight\n0,0,-1\n";
        assert!(read_weight_map(neg.as_bytes()).is_err());
    }
}
