use std::io::Write;

use depthreg::contours::*;
use depthreg::estimators::Dataset;
use depthreg::geometry::{direction_grid, Point2};
use depthreg::kernels::{BandwidthPlan, KernelFamily, KernelSpec};
use depthreg::simlab::*;
use nalgebra::DMatrix;

#[test]
fn csv_round_trip_gives_identical_cuts() {
    let spec = ModelSpec::new(ModelName::ParabQuad, 400, 12).unwrap();
    let data = generate(&spec);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "id,w,y1,y2").unwrap();
    for i in 0..data.n() {
        let y = data.response(i);
        writeln!(file, "{i},{},{},{}", data.covariate(i)[0], y[0], y[1]).unwrap();
    }
    file.flush().unwrap();

    let ing = ingest_csv(file.path(), "w", &["y1", "y2"]).unwrap();
    assert_eq!(ing.dropped_rows, 0);
    assert_eq!(ing.dataset.responses(), data.responses());

    let grid = direction_grid(2, 90).unwrap();
    let kernel = KernelSpec::new(KernelFamily::Epanechnikov, 1).unwrap();
    let s = Some(Smoothing {
        kernel: &kernel,
        h: 0.8,
    });
    let a = build_cut(&data, 0.25, &[0.4], &grid, s, Method::LocalBilinear).unwrap();
    let b = build_cut(&ing.dataset, 0.25, &[0.4], &grid, s, Method::LocalBilinear).unwrap();
    assert_eq!(a.polygon, b.polygon);
}

#[test]
fn location_family_is_nested_with_chi_square_coverage() {
    let mut rng = stream_rng(77, 0);
    let y = DMatrix::from_fn(4000, 2, |_, _| standard_normal(&mut rng));
    let data = Dataset::location(y).unwrap();
    let taus = [0.1, 0.2, 0.3, 0.4];
    let grid = direction_grid(2, 180).unwrap();
    let family = build_family(&data, &taus, &[], &grid, None, None, Method::Global, true).unwrap();
    assert!(is_nested(&family.polygons(), 0.0));

    let points: Vec<Point2> = (0..data.n())
        .map(|i| {
            let r = data.response(i);
            [r[0], r[1]]
        })
        .collect();
    let unit = vec![1.0; points.len()];
    for (cut, &tau) in family.contours.iter().zip(&taus) {
        // P(|Z| <= r) for the disk of radius Phi^{-1}(1 - tau)
        let r = depthreg::kernels::normal_quantile(1.0 - tau);
        let expected = 1.0 - (-r * r / 2.0).exp();
        let got = empirical_coverage(cut, &points, &unit).unwrap();
        assert!(
            (got - expected).abs() < 0.04,
            "tau {tau}: {got} vs {expected}"
        );
    }
}

#[test]
fn contour_json_round_trips() {
    let spec = ModelSpec::new(ModelName::ParabHomo, 300, 5).unwrap();
    let data = generate(&spec);
    let kernel = KernelSpec::new(KernelFamily::Gaussian, 1).unwrap();
    let plan = BandwidthPlan::manual(0.5).unwrap();
    let grid = direction_grid(2, 60).unwrap();
    let family = build_family(
        &data,
        &[0.2, 0.4],
        &[0.0],
        &grid,
        Some(&kernel),
        Some(&plan),
        Method::LocalConstant,
        true,
    )
    .unwrap();
    for cut in &family.contours {
        let back: CutContour = serde_json::from_str(&cut.to_json()).unwrap();
        assert_eq!(back.polygon, cut.polygon);
        assert_eq!(back.per_direction, cut.per_direction);
    }
    let csv = contours_to_csv(&family.contours);
    let rows = family
        .contours
        .iter()
        .map(|c| c.polygon().map_or(0, |p| p.len()))
        .sum::<usize>();
    assert_eq!(csv.lines().count(), rows + 1);
}
