use super::output::{cell, num, opt_num, read_json, Table};
use super::stages::{DepthRow, GeometryState, PatchResults, ReversalState, RobustnessState};
use super::Pipeline;
use crate::activation::StreamId;
use crate::error::{Error, Result};
use crate::geometry::{LayerSlot, SimilarityGroup};
use crate::intervention::{peak_necessity, peak_sufficiency, InterventionReport};
use crate::relation::RelationLabel;

/// Loads a stage's state, turning "not produced" into `None`.
fn optional<T: serde::de::DeserializeOwned>(p: &Pipeline, rel: &str) -> Result<Option<T>> {
    match read_json(&p.out(rel)) {
        Ok(v) => Ok(Some(v)),
        Err(Error::MissingFile(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn peak_table(p: &Pipeline, reports: &[InterventionReport], necessity: bool) -> Table {
    let rate = if necessity { "drop_rate" } else { "delta_flip_rate" };
    let columns = [
        "relation", "layer", "k", "dld_std", "dld_std_lo", "dld_std_hi", "dld_raw", rate, "rate_lo", "rate_hi",
        "control_ratio",
    ];
    let mut t = Table::new("report", &p.hash, &columns);
    for relation in RelationLabel::SEMANTIC {
        let mine: Vec<InterventionReport> = reports.iter().filter(|r| r.relation == relation).cloned().collect();
        let best = if necessity {
            peak_necessity(&mine)
        } else {
            peak_sufficiency(&mine)
        };
        if let Some(r) = best {
            t.row(vec![
                cell(relation),
                cell(r.layer),
                cell(r.k),
                opt_num(r.delta_ld_std.map(|c| c.point)),
                opt_num(r.delta_ld_std.map(|c| c.lo)),
                opt_num(r.delta_ld_std.map(|c| c.hi)),
                num(r.delta_ld_raw.point),
                num(r.rate.point),
                num(r.rate.lo),
                num(r.rate.hi),
                opt_num(r.control_ratio),
            ]);
        }
    }
    t
}

impl Pipeline {
    fn skipped(&self, table: &str, needs: &str) -> Result<()> {
        self.log.line(format!("[report] skipping {table}: {needs} stage output not found"))
    }

    pub(super) fn stage_report(&self) -> Result<()> {
        let (_, manifest) = self.main_dataset()?;
        let checksum = manifest.checksum.as_str();
        let stale = |what: &str, found: &str| -> Result<()> {
            if found == checksum {
                Ok(())
            } else {
                Err(Error::Checksum {
                    what: format!("{what} (re-run the producing stage)"),
                    expected: checksum.to_string(),
                    found: found.to_string(),
                })
            }
        };

        match optional::<Vec<DepthRow>>(self, "depth/results.json")? {
            Some(rows) => {
                let mut t = Table::new(
                    "report",
                    &self.hash,
                    &["relation", "mean", "mean_lo", "mean_hi", "peak", "peak_lo", "peak_hi", "com_norm", "com_norm_lo", "com_norm_hi"],
                );
                for r in rows.iter().filter(|r| r.stream == StreamId::PostResidual) {
                    match &r.profile {
                        Some(p) => t.row(vec![
                            cell(r.relation),
                            num(p.mean.point),
                            num(p.mean.lo),
                            num(p.mean.hi),
                            num(p.peak.point),
                            num(p.peak.lo),
                            num(p.peak.hi),
                            num(p.com_norm.point),
                            num(p.com_norm.lo),
                            num(p.com_norm.hi),
                        ]),
                        None => {
                            let mut cells = vec![cell(r.relation)];
                            cells.extend(std::iter::repeat_n("NA".to_string(), 9));
                            t.row(cells);
                        }
                    }
                }
                t.write(&self.out("report/table2_probing.tsv"))?;
            }
            None => self.skipped("table2_probing", "depth")?,
        }

        match optional::<ReversalState>(self, "reverse/results.json")? {
            Some(state) => {
                stale("reversal results", &state.dataset_checksum)?;
                let mut t = Table::new(
                    "report",
                    &self.hash,
                    &["relation", "acc_orig", "acc_flip", "delta", "delta_lo", "delta_hi"],
                );
                for r in &state.results {
                    t.row(vec![
                        cell(r.relation),
                        num(r.acc_orig.point),
                        num(r.acc_flip.point),
                        num(r.delta),
                        num(r.delta_ci.lo),
                        num(r.delta_ci.hi),
                    ]);
                }
                t.write(&self.out("report/table3_reversal.tsv"))?;
            }
            None => self.skipped("table3_reversal", "reverse")?,
        }

        match optional::<PatchResults>(self, "patch/results.json")? {
            Some(state) => {
                stale("patch results", &state.dataset_checksum)?;
                peak_table(self, &state.sufficiency, false).write(&self.out("report/table4_sufficiency.tsv"))?;
                peak_table(self, &state.necessity, true).write(&self.out("report/table5_necessity.tsv"))?;
            }
            None => {
                self.skipped("table4_sufficiency", "patch")?;
                self.skipped("table5_necessity", "patch")?;
            }
        }

        match optional::<RobustnessState>(self, "robustness/results.json")? {
            Some(state) => {
                stale("robustness results", &state.dataset_checksum)?;
                let mut t = Table::new("report", &self.hash, &["prompt_set", "mean_acc", "peak_acc", "delta_fr", "drop_rate"]);
                for r in &state.rows {
                    t.row(vec![cell(&r.prompt_set), num(r.mean_acc), num(r.peak_acc), num(r.delta_fr), num(r.drop_rate)]);
                }
                t.write(&self.out("report/table6_robustness.tsv"))?;
            }
            None => self.skipped("table6_robustness", "robustness")?,
        }

        match optional::<GeometryState>(self, "geometry/results.json")? {
            Some(state) => {
                stale("geometry results", &state.dataset_checksum)?;
                let mut columns = vec!["group"];
                columns.extend(LayerSlot::ALL.iter().map(|s| s.name()));
                let mut t = Table::new("report", &self.hash, &columns);
                for group in SimilarityGroup::ALL {
                    let mut cells = vec![cell(group)];
                    for slot in LayerSlot::ALL {
                        let v = state
                            .cells
                            .iter()
                            .find(|c| c.group == group && c.layer_slot == slot)
                            .map(|c| c.mean_cos);
                        cells.push(opt_num(v));
                    }
                    t.row(cells);
                }
                t.write(&self.out("report/table_geometry.tsv"))?;
            }
            None => self.skipped("table_geometry", "geometry")?,
        }
        Ok(())
    }
}
