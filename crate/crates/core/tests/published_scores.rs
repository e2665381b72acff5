use groundrag::eval::{aggregate, relative_improvement, EvalRecord, Metric, ReportedMean};
use groundrag::jsonl;
use groundrag::pipeline::Mode;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");

fn records() -> Vec<EvalRecord> {
    jsonl::read(format!("{FIXTURES}/published_scores.jsonl")).unwrap().1
}

fn reported() -> Vec<ReportedMean> {
    let text = std::fs::read_to_string(format!("{FIXTURES}/published_means.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn fixture_has_ten_questions_in_three_modes() {
    let r = records();
    assert_eq!(r.len(), 30);
    for mode in Mode::ALL {
        assert_eq!(r.iter().filter(|x| x.mode == mode).count(), 10);
    }
}

#[test]
fn means_match_hand_computed_sums() {
    let r = records();
    let report = aggregate(&r).unwrap();
    // plain sums, independent of the aggregation code
    for mode in Mode::ALL {
        let cells: Vec<&EvalRecord> = r.iter().filter(|x| x.mode == mode).collect();
        let f = cells.iter().map(|x| x.faithfulness).sum::<f64>() / cells.len() as f64;
        let v = cells.iter().map(|x| x.relevance).sum::<f64>() / cells.len() as f64;
        assert!((report.mean(mode, Metric::Faithfulness).unwrap() - f).abs() < 1e-12);
        assert!((report.mean(mode, Metric::Relevance).unwrap() - v).abs() < 1e-12);
    }
    let expect = [
        (Mode::Vanilla, 0.347, 0.450),
        (Mode::Basic, 0.621, 0.797),
        (Mode::Advanced, 0.700, 0.800),
    ];
    for (mode, f, v) in expect {
        assert!(
            (report.mean(mode, Metric::Faithfulness).unwrap() - f).abs() < 5e-4,
            "{mode}"
        );
        assert!(
            (report.mean(mode, Metric::Relevance).unwrap() - v).abs() < 5e-4,
            "{mode}"
        );
    }
}

#[test]
fn summary_means_give_published_percentages() {
    let pct = |b: f64, n: f64| relative_improvement(b, n).unwrap().round() as i64;
    assert_eq!(pct(0.347, 0.621), 79);
    assert_eq!(pct(0.450, 0.697), 55);
    assert_eq!(pct(0.621, 0.797), 28);
}

#[test]
fn per_question_cells_give_their_own_improvements() {
    let report = aggregate(&records()).unwrap();
    let pct = |metric, base, cand| {
        report
            .improvement(metric, base, cand)
            .and_then(|i| i.rounded_percent())
            .unwrap()
    };
    // (0.621 / 0.347 - 1), (0.797 / 0.450 - 1), (0.700 / 0.621 - 1)
    assert_eq!(pct(Metric::Faithfulness, Mode::Vanilla, Mode::Basic), 79);
    assert_eq!(pct(Metric::Relevance, Mode::Vanilla, Mode::Basic), 77);
    assert_eq!(pct(Metric::Faithfulness, Mode::Basic, Mode::Advanced), 13);
}

#[test]
fn inconsistent_published_means_are_flagged() {
    let mut report = aggregate(&records()).unwrap();
    report.check_reported(&reported());
    let flagged: Vec<(Mode, Metric)> = report.discrepancies.iter().map(|d| (d.mode, d.metric)).collect();
    assert_eq!(
        flagged,
        [(Mode::Basic, Metric::Relevance), (Mode::Advanced, Metric::Faithfulness)]
    );
    let text = report.render_text();
    assert!(text.contains("0.700"));
    assert!(text.contains("79"));
}
