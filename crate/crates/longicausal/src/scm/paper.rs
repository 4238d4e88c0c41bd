//! Built-in data-generating process: a 12-period pediatric HIV cohort with
//! baseline region/sex/age, time-varying CD4 count (`L1`), CD4 fraction
//! (`L2`) and weight-for-age z-score (`L3`), height-for-age z-score outcome
//! (`Y`), monotone treatment (`A`) and censoring (`C`).

use crate::expr::{base, c, cmp, expit, lag, log, sq, sqrt, tvar, var, Expr};
use crate::longdata::{Comparator, NodeRole, ValueKind};

use super::model::{Dist, NodeDef, StructuralEquationModel};

const T_MAX: u32 = 12;

/// Tail replacements for the CD4-count scale.
const L1_TAILS: ((f64, f64), (f64, f64)) = ((0.0, 50.0), (5000.0, 10000.0));
/// Tail replacements for the CD4-fraction scale.
const L2_TAILS: ((f64, f64), (f64, f64)) = ((0.03, 0.09), (0.7, 0.8));
/// Tail replacements for the z-score scales (symmetric about the bounds).
const Z_TAILS: ((f64, f64), (f64, f64)) = ((-10.0, -3.0), (3.0, 10.0));

fn def(
    name: &str,
    time: u32,
    role: NodeRole,
    kind: ValueKind,
    dist: Dist,
    emit: bool,
) -> NodeDef {
    NodeDef { name: name.into(), time, role, kind, dist, emit, intervenable: false }
}

fn trunc(
    mu: Expr,
    sigma: f64,
    bounds: (f64, f64),
    tails: ((f64, f64), (f64, f64)),
) -> Dist {
    Dist::TruncNormal { mu, sigma: c(sigma), bounds, lo_tail: tails.0, hi_tail: tails.1 }
}

/// Builds the built-in 12-period structural-equation model used for ground
/// truth, benchmark replication, and the data-support oracle.
///
/// Emitted columns: `V1 V2 V3`, then per time `L1 L2 L3 Y` for t = 0..12 and
/// `A C` for t < 12. The final-period treatment and censoring nodes are
/// generated (the outcome depends on current treatment, and censoring at the
/// final time hides `Y.12`) but not emitted. The standardized baselines
/// `L1s`/`L2s` are internal point masses feeding later equations.
pub fn build_paper_dgp() -> StructuralEquationModel {
    let mut nodes = Vec::new();
    let region = || cmp(var("V1"), Comparator::Ge, c(0.5)); // indicator of region A

    // Baseline block.
    nodes.push(def(
        "V1",
        0,
        NodeRole::Baseline,
        ValueKind::Binary,
        Dist::Bernoulli { p: c(4392.0 / 5826.0) },
        true,
    ));
    nodes.push(def(
        "V2",
        0,
        NodeRole::Baseline,
        ValueKind::Binary,
        Dist::Bernoulli {
            p: region() * c(2222.0 / 4392.0)
                + (c(1.0) - region()) * c(758.0 / 1434.0),
        },
        true,
    ));
    nodes.push(def(
        "V3",
        0,
        NodeRole::Baseline,
        ValueKind::Continuous,
        Dist::Uniform { lo: c(1.0), hi: c(5.0) },
        true,
    ));
    nodes.push(def(
        "L1",
        0,
        NodeRole::Confounder,
        ValueKind::Continuous,
        Dist::TruncNormal {
            mu: c(720.0) - c(70.0) * region(),
            sigma: c(400.0) - c(50.0) * region(),
            bounds: (0.0, 10000.0),
            lo_tail: L1_TAILS.0,
            hi_tail: L1_TAILS.1,
        },
        true,
    ));
    // Standardized baseline CD4 count (deterministic).
    nodes.push(def(
        "L1s",
        0,
        NodeRole::Confounder,
        ValueKind::Continuous,
        Dist::Normal {
            mu: (var("L1") - c(671.7468)) / c(10.0 * 352.2788) + c(1.0),
            sigma: c(0.0),
        },
        false,
    ));
    nodes.push(def(
        "L2",
        0,
        NodeRole::Confounder,
        ValueKind::Continuous,
        trunc(
            c(0.16) + c(0.05) * (var("L1") - c(650.0)) / c(650.0),
            0.07,
            (0.06, 0.8),
            L2_TAILS,
        ),
        true,
    ));
    // Standardized baseline CD4 fraction (deterministic).
    nodes.push(def(
        "L2s",
        0,
        NodeRole::Confounder,
        ValueKind::Continuous,
        Dist::Normal {
            mu: (var("L2") - c(0.1648594)) / c(10.0 * 0.06980332) + c(1.0),
            sigma: c(0.0),
        },
        false,
    ));
    nodes.push(def(
        "L3",
        0,
        NodeRole::Confounder,
        ValueKind::Continuous,
        trunc(
            c(-2.05) + c(0.4) * region()
                + c(0.1) * var("V3")
                + c(0.05) * (var("L1") - c(650.0)) / c(650.0)
                + c(0.05) * (var("L2") - c(16.0)) / c(16.0),
            1.0,
            (-5.0, 5.0),
            Z_TAILS,
        ),
        true,
    ));
    nodes.push(def(
        "A",
        0,
        NodeRole::Treatment,
        ValueKind::Binary,
        Dist::Bernoulli { p: c(0.0) },
        true,
    ));
    nodes.push(def(
        "C",
        0,
        NodeRole::Censoring,
        ValueKind::Binary,
        Dist::Bernoulli { p: c(0.0) },
        true,
    ));
    nodes.push(def(
        "Y",
        0,
        NodeRole::Outcome,
        ValueKind::Continuous,
        trunc(
            c(-2.6)
                + c(0.1) * cmp(var("V3"), Comparator::Gt, c(2.0))
                + c(0.3) * cmp(var("V1"), Comparator::Lt, c(0.5))
                + var("L3")
                + c(1.45),
            1.1,
            (-5.0, 5.0),
            Z_TAILS,
        ),
        true,
    ));

    // Follow-up blocks: L1, L2, L3, A, C, Y per time.
    for t in 1..=T_MAX {
        let last = t == T_MAX;
        // Piecewise CD4 growth: strong early gain, plateau after month 8.
        let growth = Expr::PiecewiseT {
            branches: vec![
                (4, c(13.0) * log(tvar() * c((1034.0 - 662.0) / 8.0))),
                (8, c(4.0) * log(tvar() * c((1034.0 - 662.0) / 8.0))),
            ],
            default: Box::new(c(0.0)),
        };
        nodes.push(def(
            "L1",
            t,
            NodeRole::Confounder,
            ValueKind::Continuous,
            Dist::TruncNormal {
                mu: growth
                    + lag("L1", 1)
                    + c(2.0) * lag("L2", 1)
                    + c(2.0) * lag("L3", 1)
                    + c(2.5) * lag("A", 1),
                sigma: c(50.0),
                bounds: (0.0, 10000.0),
                lo_tail: L1_TAILS.0,
                hi_tail: L1_TAILS.1,
            },
            true,
        ));
        nodes.push(def(
            "L2",
            t,
            NodeRole::Confounder,
            ValueKind::Continuous,
            trunc(
                lag("L2", 1)
                    + c(0.0003) * (var("L1") - lag("L1", 1))
                    + c(0.0005) * lag("L3", 1)
                    + c(0.0005) * lag("A", 1) * base("L1s"),
                0.02,
                (0.06, 0.8),
                L2_TAILS,
            ),
            true,
        ));
        nodes.push(def(
            "L3",
            t,
            NodeRole::Confounder,
            ValueKind::Continuous,
            trunc(
                lag("L3", 1)
                    + c(0.0017) * (var("L1") - lag("L1", 1))
                    + c(0.2) * (var("L2") - lag("L2", 1))
                    + c(0.005) * lag("A", 1) * base("L2s"),
                0.5,
                (-5.0, 5.0),
                Z_TAILS,
            ),
            true,
        ));
        // Monotone treatment: probability 1 once on treatment.
        let mut a = def(
            "A",
            t,
            NodeRole::Treatment,
            ValueKind::Binary,
            Dist::Bernoulli {
                p: lag("A", 1)
                    + (c(1.0) - lag("A", 1))
                        * expit(
                            c(-2.4)
                                + c(0.015) * (c(750.0) - var("L1"))
                                + c(5.0) * (c(0.2) - var("L2"))
                                - c(0.8) * var("L3")
                                + c(0.8) * tvar(),
                        ),
            },
            !last,
        );
        a.intervenable = true;
        nodes.push(a);
        nodes.push(def(
            "C",
            t,
            NodeRole::Censoring,
            ValueKind::Binary,
            Dist::Bernoulli {
                p: expit(
                    c(-6.0)
                        + c(0.01) * (c(750.0) - var("L1"))
                        + (c(0.2) - var("L2"))
                        - c(0.65) * var("L3")
                        - var("A"),
                ),
            },
            !last,
        ));
        nodes.push(def(
            "Y",
            t,
            NodeRole::Outcome,
            ValueKind::Continuous,
            trunc(
                lag("Y", 1)
                    + c(0.00005) * (var("L1") - lag("L1", 1))
                    - c(0.000001) * sq((var("L1") - lag("L1", 1)) * sqrt(base("L1s")))
                    + c(0.01) * (var("L2") - lag("L2", 1))
                    - c(0.0001) * sq((var("L2") - lag("L2", 1)) * sqrt(base("L2s")))
                    + c(0.07) * ((var("L3") - lag("L3", 1)) * (base("L3") + c(1.5135)))
                    - c(0.001) * sq((var("L3") - lag("L3", 1)) * (base("L3") + c(1.5135)))
                    + c(0.005) * var("A")
                    + c(0.075) * lag("A", 1)
                    + c(0.05) * var("A") * lag("A", 1),
                0.01,
                (-5.0, 5.0),
                Z_TAILS,
            ),
            true,
        ));
    }

    StructuralEquationModel::new(nodes).expect("built-in model is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_has_expected_shape() {
        let m = build_paper_dgp();
        assert_eq!(m.t_max(), 12);
        let schema = m.schema().unwrap();
        // 3 baselines + 12 * (L1 L2 L3 Y A C) for t=0..11 + (L1 L2 L3 Y) at 12.
        assert_eq!(schema.len(), 3 + 12 * 6 + 4);
        assert_eq!(schema.labels()[..4], ["V1", "V2", "V3", "L1.0"]);
        assert_eq!(*schema.labels().last().unwrap(), "Y.12");
        assert!(schema.index_of("A", 12).is_none()); // generated, not emitted
        assert!(m.node_index("A", 12).is_some());
        assert!(m.node_index("L1s", 0).is_some());
        assert!(schema.index_of_label("L1s").is_none());
    }
}
