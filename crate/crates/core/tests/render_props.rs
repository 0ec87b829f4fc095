use jtstats::geo::{Feature, Geometry};
use jtstats::render::{class_of, palette};
use jtstats::{
    choropleth, class_breaks, join_geo, line_chart, ChoroplethSpec, Classing, Column, ColumnData, FeatureSet,
    GeoLevel, LineChartSpec, Provenance, TidyTable,
};
use jtstats_fixtures::FOOD_BY_MODE_CSV;
use proptest::prelude::*;

fn classing() -> impl Strategy<Value = Classing> {
    prop_oneof![Just(Classing::Quantile), Just(Classing::EqualInterval)]
}

/// Nearest-rank quantile computed by counting, without sorting tricks.
fn brute_quantile(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let target = (p * n as f64).ceil().max(1.0) as usize;
    *values
        .iter()
        .find(|&&v| values.iter().filter(|&&w| w <= v).count() >= target
            && values.iter().filter(|&&w| w < v).count() < target)
        .unwrap()
}

fn geo_fixture(values: &[Option<f64>]) -> jtstats::GeoTable {
    let codes: Vec<String> = (0..values.len()).map(|i| format!("E01{:06}", i + 1)).collect();
    let features = codes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let x = -2.0 + (i % 7) as f64 * 0.05;
            let y = 52.0 + (i / 7) as f64 * 0.05;
            Feature {
                code: c.clone(),
                name: String::new(),
                geometry: Geometry::Polygon(vec![vec![[x, y], [x + 0.05, y], [x + 0.04, y + 0.05], [x, y]]]),
                properties: Default::default(),
            }
        })
        .collect();
    let fs = FeatureSet::new(GeoLevel::Lsoa, features).unwrap();
    let t = TidyTable::new(
        vec![
            Column::new("lsoa_code", ColumnData::Text(codes.into_iter().map(Some).collect())),
            Column::new("v", ColumnData::Float(values.to_vec())),
        ],
        Provenance::new("t"),
    )
    .unwrap();
    join_geo(t, &fs, "lsoa_code").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn classing_is_monotone(
        values in prop::collection::vec(-500.0f64..500.0, 1..60),
        classes in 2usize..9,
        c in classing(),
        cap in prop::option::of(0.0f64..200.0),
        a in -600.0f64..600.0,
        b in -600.0f64..600.0,
    ) {
        let t = class_breaks(&values, c, classes, cap).unwrap();
        prop_assert_eq!(t.len(), classes - 1);
        prop_assert!(t.windows(2).all(|w| w[0] <= w[1]));
        let capped = |v: f64| cap.map_or(v, |k| v.min(k));
        let (lo, hi) = if capped(a) <= capped(b) { (a, b) } else { (b, a) };
        prop_assert!(class_of(capped(lo), &t) <= class_of(capped(hi), &t));
    }

    #[test]
    fn quantiles_match_brute_force(values in prop::collection::vec(0u32..50, 1..40), classes in 2usize..7) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let t = class_breaks(&values, Classing::Quantile, classes, None).unwrap();
        for (k, threshold) in t.iter().enumerate() {
            prop_assert_eq!(*threshold, brute_quantile(&values, (k + 1) as f64 / classes as f64));
        }
    }

    #[test]
    fn maps_are_deterministic_with_one_path_per_geometry(
        values in prop::collection::vec(prop::option::of(0.0f64..300.0), 1..30),
        drop in prop::collection::vec(any::<bool>(), 30),
    ) {
        let mut gt = geo_fixture(&values);
        for (i, d) in drop.iter().take(values.len()).enumerate() {
            if *d {
                gt.features[i] = None;
            }
        }
        let spec = ChoroplethSpec::new("v").with_cap(120.0);
        let a = choropleth(&gt, &spec).unwrap();
        prop_assert_eq!(&a, &choropleth(&gt, &spec).unwrap());
        let svg = String::from_utf8(a).unwrap();
        prop_assert_eq!(svg.matches("<path ").count(), gt.matched());
    }
}

#[test]
fn equal_interval_example() {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(class_breaks(&v, Classing::EqualInterval, 4, None).unwrap(), [25.75, 50.5, 75.25]);
}

#[test]
fn cap_groups_values_at_and_above_cap() {
    let gt = geo_fixture(&[Some(60.0), Some(119.0), Some(120.0), Some(500.0)]);
    let spec = ChoroplethSpec::new("v").with_cap(120.0).with_classes(2);
    let svg = String::from_utf8(choropleth(&gt, &spec).unwrap()).unwrap();
    let fills: Vec<&str> = svg
        .lines()
        .filter(|l| l.starts_with("<path "))
        .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
        .collect();
    assert_eq!(fills.len(), 4);
    assert_eq!(fills[2], fills[3]);
    assert_eq!(palette(2), [fills[0], fills[3]]);
}

#[test]
fn food_chart_has_one_line_per_mode() {
    let t = TidyTable::from_csv(FOOD_BY_MODE_CSV.as_bytes(), "food.csv").unwrap();
    let series = ["walk", "cycle", "car", "pt"].map(String::from).to_vec();
    let spec = LineChartSpec::new("year", series);
    let svg = String::from_utf8(line_chart(&t, &spec).unwrap()).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert_eq!(line_chart(&t, &spec).unwrap(), svg.into_bytes());
}
