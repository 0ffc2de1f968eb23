//! Dummy expansion of regression rows into a design matrix.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ols::{PValueDist, SmallSample};
use super::{venue_label, RegError, RegressionRow, SizeBucket, REFERENCE_VENUE, REFERENCE_YEAR};

/// Interaction families over the row attributes: size buckets (T), year
/// (Y), the ETF indicator (E), and the log inter-trade gap (Td). Venue
/// enters as main effects only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionFamily {
    SizeYear,
    SizeEtf,
    YearEtf,
    TimeDiffSize,
    TimeDiffYear,
    TimeDiffEtf,
}

impl InteractionFamily {
    pub const ALL: [InteractionFamily; 6] = [
        InteractionFamily::SizeYear,
        InteractionFamily::SizeEtf,
        InteractionFamily::YearEtf,
        InteractionFamily::TimeDiffSize,
        InteractionFamily::TimeDiffYear,
        InteractionFamily::TimeDiffEtf,
    ];
}

/// Which terms the design carries beyond the always-on main effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub families: BTreeSet<InteractionFamily>,
    /// Adds the predicted-positive indicator; set by the all-rows fit.
    pub include_predicted: bool,
    pub pvalues: PValueDist,
    pub small_sample: SmallSample,
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec {
            families: BTreeSet::from([InteractionFamily::SizeYear, InteractionFamily::TimeDiffYear]),
            include_predicted: false,
            pvalues: PValueDist::Normal,
            small_sample: SmallSample::Cr1,
        }
    }
}

/// A realized design: response, matrix, published column names, cluster
/// keys, and the names pruned for being constant in this data.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub clusters: Vec<u64>,
    pub pruned: Vec<String>,
}

fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Expands rows into the dummy-coded design. Dummies are created only
/// for levels present in the data, reference levels (round lot, 2017,
/// NYSE) are never expanded, and any non-intercept column constant
/// across all rows is pruned with its name recorded. Interaction
/// columns are elementwise products of their parent values.
pub fn build_design(rows: &[RegressionRow], spec: &DesignSpec) -> Result<Design, RegError> {
    if rows.is_empty() {
        return Err(RegError::Empty("no rows to build a design from".into()));
    }
    let n = rows.len();

    let sizes: BTreeSet<SizeBucket> = rows.iter().map(|r| r.size_bucket).collect();
    let years: BTreeSet<u16> = rows.iter().map(|r| r.year).collect();
    let venues: BTreeSet<u8> = rows.iter().map(|r| r.venue_id).collect();

    // Parent columns the interactions multiply; built once whether or
    // not the main effect survives pruning.
    let size_dummies: Vec<(String, Vec<f64>)> = SizeBucket::ALL
        .iter()
        .filter(|b| **b != SizeBucket::REFERENCE && sizes.contains(b))
        .map(|b| {
            let col = rows.iter().map(|r| f64::from(r.size_bucket == *b)).collect();
            (format!("size_{}", b.label()), col)
        })
        .collect();
    let year_dummies: Vec<(String, Vec<f64>)> = years
        .iter()
        .filter(|y| **y != REFERENCE_YEAR)
        .map(|y| {
            let col = rows.iter().map(|r| f64::from(r.year == *y)).collect();
            (format!("year_{y}"), col)
        })
        .collect();
    let etf: Vec<f64> = rows.iter().map(|r| f64::from(r.is_etf)).collect();
    let log_gap: Vec<f64> = rows.iter().map(|r| r.log_since_last).collect();

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    columns.push(("intercept".into(), vec![1.0; n]));
    columns.extend(size_dummies.iter().cloned());
    columns.extend(year_dummies.iter().cloned());
    for v in venues.iter().filter(|v| **v != REFERENCE_VENUE) {
        let col = rows.iter().map(|r| f64::from(r.venue_id == *v)).collect();
        columns.push((venue_label(*v), col));
    }
    columns.push(("is_etf".into(), etf.clone()));
    columns.push(("time_of_trade".into(), rows.iter().map(|r| r.time_of_trade).collect()));
    columns.push(("log_since_last".into(), log_gap.clone()));
    if spec.include_predicted {
        let col = rows.iter().map(|r| f64::from(r.predicted_label == 1)).collect();
        columns.push(("predicted_positive".into(), col));
    }

    let product = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x * y).collect()
    };
    for family in &spec.families {
        match family {
            InteractionFamily::SizeYear => {
                for (sn, sc) in &size_dummies {
                    for (yn, yc) in &year_dummies {
                        columns.push((format!("{sn}:{yn}"), product(sc, yc)));
                    }
                }
            }
            InteractionFamily::SizeEtf => {
                for (sn, sc) in &size_dummies {
                    columns.push((format!("{sn}:is_etf"), product(sc, &etf)));
                }
            }
            InteractionFamily::YearEtf => {
                for (yn, yc) in &year_dummies {
                    columns.push((format!("{yn}:is_etf"), product(yc, &etf)));
                }
            }
            InteractionFamily::TimeDiffSize => {
                for (sn, sc) in &size_dummies {
                    columns.push((format!("log_since_last:{sn}"), product(&log_gap, sc)));
                }
            }
            InteractionFamily::TimeDiffYear => {
                for (yn, yc) in &year_dummies {
                    columns.push((format!("log_since_last:{yn}"), product(&log_gap, yc)));
                }
            }
            InteractionFamily::TimeDiffEtf => {
                columns.push(("log_since_last:is_etf".into(), product(&log_gap, &etf)));
            }
        }
    }

    let mut names = Vec::new();
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut pruned = Vec::new();
    for (idx, (name, col)) in columns.into_iter().enumerate() {
        if let Some(bad) = col.iter().find(|v| !v.is_finite()) {
            return Err(RegError::NonFinite(format!("column {name} contains {bad}")));
        }
        if idx > 0 && is_constant(&col) {
            pruned.push(name);
            continue;
        }
        names.push(name);
        kept.push(DVector::from_vec(col));
    }

    Ok(Design {
        names,
        x: DMatrix::from_columns(&kept),
        y: DVector::from_iterator(n, rows.iter().map(|r| r.scaled_score)),
        clusters: rows.iter().map(|r| r.window_id).collect(),
        pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn row(
        window_id: u64,
        scaled_score: f64,
        size_bucket: SizeBucket,
        year: u16,
        venue_id: u8,
        is_etf: bool,
        time_of_trade: f64,
        log_since_last: f64,
        predicted_label: u8,
    ) -> RegressionRow {
        RegressionRow {
            window_id,
            trade_id: window_id * 100,
            scaled_score,
            size_bucket,
            year,
            venue_id,
            is_etf,
            time_of_trade,
            log_since_last,
            trade_price: 100.0,
            predicted_label,
        }
    }

    #[test]
    fn reference_cell_rows_carry_only_the_intercept() {
        // All rows in the reference cell except one per dummy, so every
        // column survives pruning and the reference row reads zero.
        let rows = vec![
            row(0, 1.0, SizeBucket::RoundLot, 2017, 0, false, 0.5, 2.0, 0),
            row(1, 2.0, SizeBucket::OddLot, 2018, 3, true, 0.25, 3.0, 1),
            row(2, 3.0, SizeBucket::RoundLot, 2018, 0, false, 0.75, 1.0, 0),
        ];
        let d = build_design(&rows, &DesignSpec::default()).unwrap();
        let ref_row = d.x.row(0);
        assert_eq!(d.names[0], "intercept");
        assert_eq!(ref_row[0], 1.0);
        for j in 1..d.names.len() {
            let v = ref_row[j];
            let name = &d.names[j];
            if name == "time_of_trade" || name == "log_since_last" {
                continue;
            }
            assert_eq!(v, 0.0, "column {name} not zero for the reference row");
        }
    }

    #[test]
    fn six_row_design_matches_the_hand_enumeration() {
        // Two sizes (round lot reference + odd lot), two years (2017
        // reference + 2018), NYSE only, mixed ETF flag. Default spec
        // gives columns: intercept, size_odd_lot, year_2018, is_etf,
        // time_of_trade, log_since_last, size_odd_lot:year_2018,
        // log_since_last:year_2018.
        let rows = vec![
            row(0, 1.0, SizeBucket::RoundLot, 2017, 0, false, 0.0, 1.0, 0),
            row(1, 2.0, SizeBucket::OddLot, 2017, 0, false, 0.2, 2.0, 0),
            row(2, 3.0, SizeBucket::RoundLot, 2018, 0, true, 0.4, 3.0, 1),
            row(3, 4.0, SizeBucket::OddLot, 2018, 0, false, 0.6, 4.0, 1),
            row(4, 5.0, SizeBucket::OddLot, 2018, 0, true, 0.8, 5.0, 0),
            row(5, 6.0, SizeBucket::RoundLot, 2017, 0, true, 1.0, 6.0, 1),
        ];
        let d = build_design(&rows, &DesignSpec::default()).unwrap();
        assert_eq!(
            d.names,
            vec![
                "intercept",
                "size_odd_lot",
                "year_2018",
                "is_etf",
                "time_of_trade",
                "log_since_last",
                "size_odd_lot:year_2018",
                "log_since_last:year_2018",
            ]
        );
        #[rustfmt::skip]
        let want = DMatrix::from_row_slice(6, 8, &[
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
            1.0, 1.0, 0.0, 0.0, 0.2, 2.0, 0.0, 0.0,
            1.0, 0.0, 1.0, 1.0, 0.4, 3.0, 0.0, 3.0,
            1.0, 1.0, 1.0, 0.0, 0.6, 4.0, 1.0, 4.0,
            1.0, 1.0, 1.0, 1.0, 0.8, 5.0, 1.0, 5.0,
            1.0, 0.0, 0.0, 1.0, 1.0, 6.0, 0.0, 0.0,
        ]);
        assert_eq!(d.x, want);
        assert_eq!(d.y.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(d.clusters, vec![0, 1, 2, 3, 4, 5]);
        assert!(d.pruned.is_empty());
    }

    #[test]
    fn interaction_columns_are_products_of_their_parents() {
        let rows: Vec<RegressionRow> = (0..40)
            .map(|i| {
                row(
                    i,
                    i as f64,
                    if i % 3 == 0 { SizeBucket::OddLot } else { SizeBucket::RoundLot },
                    if i % 2 == 0 { 2017 } else { 2020 },
                    0,
                    i % 5 == 0,
                    (i as f64) / 40.0,
                    (i as f64).ln_1p(),
                    (i % 2) as u8,
                )
            })
            .collect();
        let spec = DesignSpec { families: BTreeSet::from(InteractionFamily::ALL), ..DesignSpec::default() };
        let d = build_design(&rows, &spec).unwrap();
        let col = |name: &str| {
            let j = d.names.iter().position(|n| n == name).unwrap_or_else(|| {
                panic!("missing column {name} in {:?}", d.names)
            });
            d.x.column(j).iter().copied().collect::<Vec<f64>>()
        };
        let odd = col("size_odd_lot");
        let y2020 = col("year_2020");
        let etf = col("is_etf");
        let gap = col("log_since_last");
        let check = |name: &str, a: &[f64], b: &[f64]| {
            let got = col(name);
            for i in 0..rows.len() {
                assert_eq!(got[i], a[i] * b[i], "{name} row {i}");
            }
        };
        check("size_odd_lot:year_2020", &odd, &y2020);
        check("size_odd_lot:is_etf", &odd, &etf);
        check("year_2020:is_etf", &y2020, &etf);
        check("log_since_last:size_odd_lot", &gap, &odd);
        check("log_since_last:year_2020", &gap, &y2020);
        check("log_since_last:is_etf", &gap, &etf);
    }

    #[test]
    fn absent_levels_get_no_columns_and_constants_are_pruned() {
        // One year only, no ETFs anywhere: year dummies vanish entirely
        // (2017 is the reference), is_etf and the ETF interactions prune.
        let rows = vec![
            row(0, 1.0, SizeBucket::OddLot, 2017, 0, false, 0.1, 1.0, 0),
            row(1, 2.0, SizeBucket::RoundLot, 2017, 2, false, 0.9, 2.0, 1),
        ];
        let mut spec = DesignSpec::default();
        spec.families.insert(InteractionFamily::TimeDiffEtf);
        let d = build_design(&rows, &spec).unwrap();
        assert!(d.names.iter().all(|n| !n.contains("year")), "{:?}", d.names);
        assert!(d.names.iter().all(|n| !n.contains("etf")), "{:?}", d.names);
        assert!(d.pruned.contains(&"is_etf".to_string()));
        assert!(d.pruned.contains(&"log_since_last:is_etf".to_string()));
    }

    #[test]
    fn dummies_plus_reference_sum_to_one_for_every_row() {
        let rows: Vec<RegressionRow> = (0..60)
            .map(|i| {
                row(
                    i,
                    1.0,
                    SizeBucket::ALL[(i % 5) as usize],
                    2017 + (i % 4) as u16,
                    (i % 7) as u8,
                    i % 2 == 0,
                    0.5,
                    1.0,
                    0,
                )
            })
            .collect();
        let d = build_design(&rows, &DesignSpec::default()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            for (prefix, is_ref) in [
                ("size_", r.size_bucket == SizeBucket::REFERENCE),
                ("year_", r.year == REFERENCE_YEAR),
                ("venue_", r.venue_id == REFERENCE_VENUE),
            ] {
                let dummy_sum: f64 = d
                    .names
                    .iter()
                    .zip(d.x.row(i).iter())
                    .filter(|(n, _)| n.starts_with(prefix) && !n.contains(':'))
                    .map(|(_, v)| *v)
                    .sum();
                assert_eq!(dummy_sum + f64::from(is_ref), 1.0, "row {i} {prefix}");
            }
        }
    }

    #[test]
    fn empty_rows_are_an_error() {
        assert!(matches!(
            build_design(&[], &DesignSpec::default()),
            Err(RegError::Empty(_))
        ));
    }
}
