use hotloc_core::grid::{compute_server_maps, CellInfo, CoverageGrid, GridSpec, Point};
use hotloc_core::io::{read_weight_map, write_weight_map};
use hotloc_core::kpi::{oracle_kpis, MapLabel, OracleParams, ThroughputCurve, WeightMap};
use hotloc_core::localizer::{step6_combine, step7_smooth, ImportanceVector, LocalizerParams};
use hotloc_core::nnls::{solve_nnls, DesignSystem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn system(rows: usize) -> impl Strategy<Value = DesignSystem> {
    (
        proptest::collection::vec(0.0..1.0f64, rows * 5),
        proptest::collection::vec(-1.0..1.0f64, rows),
    )
        .prop_map(move |(a, b)| DesignSystem::new(DMatrix::from_vec(rows, 5, a), DVector::from_vec(b)).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nnls_feasible_and_optimal(sys in system(30)) {
        let sol = solve_nnls(&sys, 1e-9, 100).unwrap();
        prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
        prop_assert!(sys.kkt_violation(&sol.x) <= 1e-9);
        prop_assert!(sol.residual <= sys.residual(&[0.2; 5]));
        prop_assert!(sol.residual <= sys.residual(&[0.0; 5]));
    }

    #[test]
    fn nnls_residual_history_non_increasing(sys in system(20)) {
        let sol = solve_nnls(&sys, 1e-9, 100).unwrap();
        for w in sol.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "history {:?}", sol.history);
        }
    }

    #[test]
    fn nnls_scale_equivariance(sys in system(25), c in 0.1..10.0f64, col in 0usize..5) {
        let base = solve_nnls(&sys, 1e-9, 100).unwrap();

        let scaled_b = DesignSystem::new(sys.a.clone(), &sys.b * c).unwrap();
        let sol = solve_nnls(&scaled_b, 1e-9, 100).unwrap();
        for (x, y) in base.x.iter().zip(&sol.x) {
            prop_assert!(close(x * c, *y, 1e-7), "{} vs {}", x * c, y);
        }

        let mut a = sys.a.clone();
        a.column_mut(col).scale_mut(c);
        let sol = solve_nnls(&DesignSystem::new(a, sys.b.clone()).unwrap(), 1e-9, 100).unwrap();
        prop_assert!(close(base.x[col] / c, sol.x[col], 1e-7), "{} vs {}", base.x[col] / c, sol.x[col]);
    }

    #[test]
    fn combine_is_linear_and_exact_on_basis(
        vals in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 16), 5),
        x in proptest::array::uniform5(0.0..2.0f64),
        s in 0usize..5,
    ) {
        let maps: [WeightMap; 5] = std::array::from_fn(|k| {
            WeightMap::from_values(4, 25.0, MapLabel::PER_KPI[k], vals[k].clone()).unwrap()
        });
        let e = step6_combine(&maps, &ImportanceVector::basis(s)).unwrap();
        prop_assert_eq!(e.values(), maps[s].values());
        let q = step6_combine(&maps, &ImportanceVector::new(x).unwrap()).unwrap();
        for idx in 0..16 {
            let want: f64 = (0..5).map(|k| x[k] * maps[k].get(idx)).sum();
            prop_assert!(close(q.get(idx), want, 1e-12));
        }
    }

    #[test]
    fn smoothing_stays_within_bounds(
        vals in proptest::collection::vec(0.0..1.0f64, 144),
        h in 1e-4..1e-2f64,
    ) {
        let q = WeightMap::from_values(12, 25.0, MapLabel::Fused, vals).unwrap();
        let p = LocalizerParams { bandwidth: h, ..Default::default() };
        let s = step7_smooth(&q, &p);
        let lo = q.values().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(s.values().iter().all(|&v| v >= lo && v <= q.max()));
        let c = WeightMap::from_values(12, 25.0, MapLabel::Fused, vec![q.get(0); 144]).unwrap();
        prop_assert!(step7_smooth(&c, &p).values().iter().all(|&v| v == q.get(0)));
    }

    #[test]
    fn weight_map_csv_round_trip(vals in proptest::collection::vec(0.0..1e3f64, 25)) {
        let map = WeightMap::from_values(5, 12.5, MapLabel::Smoothed, vals).unwrap();
        let mut buf = Vec::new();
        write_weight_map(&map, &mut buf).unwrap();
        prop_assert_eq!(read_weight_map(buf.as_slice()).unwrap(), map);
    }

    #[test]
    fn oracle_is_scale_invariant(vals in proptest::collection::vec(0.0..1.0f64, 64), c in 0.01..100.0f64) {
        prop_assume!(vals.iter().sum::<f64>() > 0.0);
        let spec = GridSpec::new(8, 25.0, Point::new(-100.0, -100.0)).unwrap();
        let cells = vec![
            CellInfo { id: "A".into(), position: Point::new(-50.0, 0.0), azimuth_deg: 90.0, neighbors: vec!["B".into()] },
            CellInfo { id: "B".into(), position: Point::new(50.0, 0.0), azimuth_deg: 270.0, neighbors: vec!["A".into()] },
        ];
        let layers = cells
            .iter()
            .map(|cell| {
                spec.pixels().map(|px| -70.0 - 0.2 * spec.center(px).distance(&cell.position)).collect()
            })
            .collect();
        let grid = CoverageGrid::new(spec, cells, layers, -115.0).unwrap();
        let servers = compute_server_maps(&grid);
        let params = OracleParams {
            rho_cap: 1e9,
            throughput: ThroughputCurve { rsrp_lo: -110.0, rate_lo: 1e6, rsrp_hi: -70.0, rate_hi: 5e7 },
        };
        let w = WeightMap::from_values(8, 25.0, MapLabel::GroundTruth, vals).unwrap();
        let a = oracle_kpis(&w, &grid, &servers, &params).unwrap();
        let b = oracle_kpis(&w.scaled(c), &grid, &servers, &params).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            for t in 0..6 { prop_assert!(close(x.ta[t], y.ta[t], 1e-12)); }
            for z in 0..3 { prop_assert!(close(x.aoa[z], y.aoa[z], 1e-12)); }
            for (id, v) in &x.neighbor_level { prop_assert!(close(*v, y.neighbor_level[id], 1e-12)); }
            prop_assert!(close(x.amt, y.amt, 1e-12) && close(x.hmt, y.hmt, 1e-12));
            prop_assert!(x.hmt <= x.amt);
        }
    }
}
