use abshrink::io::{
    read_adjusted, read_readouts, read_split_pairs, read_truth, write_adjusted, write_readouts, write_split_pairs,
    write_truth, AdjustedRow,
};
use abshrink::splitreg::SplitPair;
use abshrink::{Error, ExperimentReadout, PriorModel};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-8 * a.abs().max(b.abs())
}

fn id() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_ ,\"-]{1,12}".prop_filter("trimmed", |s| s.trim() == s && !s.starts_with('#'))
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1e-5..1e-5f64, Just(0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn readouts_survive_a_round_trip(
        rows in prop::collection::vec((id(), id(), value(), 1u64..10_000_000, 1u64..10_000_000, 1e-6..1e6f64), 0..20)
    ) {
        let readouts: Vec<ExperimentReadout> = rows
            .iter()
            .map(|(e, m, d, nt, nc, s)| ExperimentReadout::new(e.as_str(), m.as_str(), *d, *nt, *nc, *s).unwrap())
            .collect();
        let back = read_readouts(&write_readouts(&readouts)).unwrap();
        prop_assert_eq!(back.len(), readouts.len());
        for (a, b) in readouts.iter().zip(&back) {
            prop_assert_eq!(&a.experiment_id, &b.experiment_id);
            prop_assert_eq!(&a.metric_id, &b.metric_id);
            prop_assert_eq!((a.n_treat, a.n_control), (b.n_treat, b.n_control));
            prop_assert!(close(a.delta, b.delta) && close(a.sigma2_pooled, b.sigma2_pooled));
        }
    }

    #[test]
    fn split_pairs_survive_a_round_trip(
        rows in prop::collection::vec((id(), value(), value(), 1e-6..1.0f64, 1.0..4.0f64), 0..20)
    ) {
        let pairs: Vec<SplitPair> = rows
            .iter()
            .map(|(e, a, b, full, k)| SplitPair::new(e.as_str(), *a, full * k, *b, full * k, *full).unwrap())
            .collect();
        let back = read_split_pairs(&write_split_pairs(&pairs)).unwrap();
        prop_assert_eq!(back.len(), pairs.len());
        for (a, b) in pairs.iter().zip(&back) {
            prop_assert_eq!(&a.experiment_id, &b.experiment_id);
            prop_assert!(close(a.delta_a, b.delta_a) && close(a.delta_b, b.delta_b));
            prop_assert!(close(a.se2_a, b.se2_a) && close(a.full_se2, b.full_se2));
        }
    }

    #[test]
    fn truth_and_adjusted_rows_survive_a_round_trip(
        rows in prop::collection::vec((id(), value(), value(), 0.0..10.0f64, 0.0..1.0f64), 0..20)
    ) {
        let truth: Vec<(String, f64)> = rows.iter().map(|(e, d, ..)| (e.clone(), *d)).collect();
        let back = read_truth(&write_truth(&truth)).unwrap();
        prop_assert_eq!(back.len(), truth.len());
        for (a, b) in truth.iter().zip(&back) {
            prop_assert!(a.0 == b.0 && close(a.1, b.1));
        }
        let adjusted: Vec<AdjustedRow> = rows
            .iter()
            .map(|(e, d, m, v, p)| AdjustedRow {
                experiment_id: e.clone(),
                metric_id: "m".into(),
                method: "eb-normal".into(),
                delta_raw: *d,
                mean_adj: *m,
                var_adj: *v,
                ci_low: m - v,
                ci_high: m + v,
                p_raw: *p,
                p_adj: *p,
            })
            .collect();
        let back = read_adjusted(&write_adjusted(&adjusted)).unwrap();
        prop_assert_eq!(back.len(), adjusted.len());
        for (a, b) in adjusted.iter().zip(&back) {
            prop_assert!(a.experiment_id == b.experiment_id && close(a.mean_adj, b.mean_adj) && close(a.var_adj, b.var_adj));
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = read_readouts(&text);
        let _ = read_split_pairs(&text);
        let _ = read_adjusted(&text);
        let _ = PriorModel::parse(&text);
    }
}

fn line_of(e: Error) -> usize {
    match e {
        Error::Parse { line, .. } => line,
        other => panic!("not a parse error: {other}"),
    }
}

#[test]
fn errors_point_at_the_offending_line() {
    let text = "experiment_id,metric_id,delta,n_treat,n_control,sigma2_pooled\n\
                a,m,0.1,100,100,1\n\
                b,m,oops,100,100,1\n";
    assert_eq!(line_of(read_readouts(text).unwrap_err()), 3);
    let text = "experiment_id,metric_id,delta,n_treat,n_control,sigma2_pooled\n\
                a,m,0.1,100,100,1\n\
                a,m,0.1,100\n";
    assert_eq!(line_of(read_readouts(text).unwrap_err()), 3);
    let text = "experiment_id,metric_id,delta,n_treat,n_control,sigma2_pooled\n\
                a,m,0.1,-3,100,1\n";
    assert_eq!(line_of(read_readouts(text).unwrap_err()), 2);
    assert_eq!(line_of(read_readouts("id,delta\n").unwrap_err()), 1);
    let pairs = "experiment_id,delta_a,se2_a,delta_b,se2_b,full_se2\n\
                 # comment\n\
                 p,1,2,1,2,1\n\
                 q,1,0.5,1,2,1\n";
    assert_eq!(line_of(read_split_pairs(pairs).unwrap_err()), 4);
    assert!(PriorModel::parse("kind=gaussian\ntau2=-1\n")
        .unwrap_err()
        .to_string()
        .contains("tau2"));
    assert_eq!(line_of(PriorModel::parse("kind=gaussian\ntau2=abc\n").unwrap_err()), 2);
    assert_eq!(line_of(PriorModel::parse("kind=gaussian\n\ntau2\n").unwrap_err()), 3);
}

#[test]
fn extra_columns_and_comments_are_tolerated() {
    let text = "experiment_id,metric_id,delta,n_treat,n_control,sigma2_pooled,note\n\
                # skipped\n\
                  a , m , 0.5 , 10 , 10 , 2 , x\n";
    let r = read_readouts(text).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].experiment_id, "a");
    assert!((r[0].se2() - 2.0 * (0.1 + 0.1)).abs() < 1e-12);
}
