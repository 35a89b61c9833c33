//! Per-class AP on a 3-image fixture against values produced by an
//! independent implementation of the COCO protocol (pycocotools 2.x,
//! `maxDets = [500]`, area range "all").

use glam_core::eval::mean_ap;
use glam_core::ingest::{parse_results, CocoFile};
use glam_core::ClassSchema;

const GT: &[u8] = include_bytes!("fixtures/eval_gt.json");
const RESULTS: &[u8] = include_bytes!("fixtures/eval_results.json");

const CAPTION: [f64; 10] = [0.5049504950495048; 10];
const FORMULA: [f64; 10] = [0.0; 10];
const LIST_ITEM: [f64; 10] = [
    0.5544554455445545,
    0.33663366336633654,
    0.33663366336633654,
    0.33663366336633654,
    0.33663366336633654,
    0.33663366336633654,
    0.33663366336633654,
    0.33663366336633654,
    0.33663366336633654,
    0.33663366336633654,
];
const PAGE_HEADER: [f64; 10] = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
const SECTION_HEADER: [f64; 10] = [1.0; 10];
const TABLE: [f64; 10] = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5049504950495048, 0.5049504950495048];
const TEXT: [f64; 10] = [
    0.7519094766619517,
    0.7519094766619517,
    0.7519094766619517,
    0.7519094766619517,
    0.7519094766619517,
    0.7519094766619517,
    0.7519094766619517,
    0.7519094766619517,
    0.5281471004243281,
    0.43762376237623757,
];
const TITLE: [f64; 10] = [1.0; 10];
const OVERALL: f64 = 0.5953076379066479;

pub fn fixture_matches_reference_evaluator() {
    let gt = CocoFile::parse(GT).unwrap();
    let results = parse_results(RESULTS).unwrap();
    let schema = ClassSchema::doclaynet();
    let report = mean_ap(&results, &gt, &schema).unwrap();

    let expected: [(&str, Option<&[f64; 10]>); 11] = [
        ("Caption", Some(&CAPTION)),
        ("Footnote", None),
        ("Formula", Some(&FORMULA)),
        ("List-item", Some(&LIST_ITEM)),
        ("Page-footer", None),
        ("Page-header", Some(&PAGE_HEADER)),
        ("Picture", None),
        ("Section-header", Some(&SECTION_HEADER)),
        ("Table", Some(&TABLE)),
        ("Text", Some(&TEXT)),
        ("Title", Some(&TITLE)),
    ];
    for (class, (name, want)) in report.classes.iter().zip(expected) {
        assert_eq!(class.name, name);
        match (want, &class.ap) {
            (None, None) => {}
            (Some(w), Some(got)) => {
                for (t, (a, b)) in got.iter().zip(w.iter()).enumerate() {
                    assert!((a - b).abs() <= 1e-6, "{name} threshold {t}: {a} vs {b}");
                }
            }
            (w, g) => panic!("{name}: expected {w:?}, got {g:?}"),
        }
    }
    assert!((report.overall_map - OVERALL).abs() <= 1e-6, "{}", report.overall_map);
}

pub fn unknown_category_in_results_is_schema_error() {
    let gt = CocoFile::parse(GT).unwrap();
    let mut results = parse_results(RESULTS).unwrap();
    results[0].category_id = 99;
    assert!(matches!(
        mean_ap(&results, &gt, &ClassSchema::doclaynet()),
        Err(glam_core::GlamError::Schema(_))
    ));
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_matches_reference_evaluator() {
        super::fixture_matches_reference_evaluator();
    }

    #[test]
    fn unknown_category_in_results_is_schema_error() {
        super::unknown_category_in_results_is_schema_error();
    }
}
