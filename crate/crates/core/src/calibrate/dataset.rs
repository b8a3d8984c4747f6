use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chem::{validate_feed, IonDatabase, IonSpecies, MixtureState, FEED_NEUTRALITY_TOL, FEED_REPAIR_THRESHOLD};
use crate::error::{Error, Result};

/// One measured (or simulated) permeate concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub experiment_id: String,
    pub ion: String,
    pub z: i32,
    #[serde(rename = "feed_mol_m3")]
    pub feed: f64,
    #[serde(rename = "jv_m_s")]
    pub jv: f64,
    #[serde(rename = "permeate_mol_m3")]
    pub permeate: f64,
    #[serde(rename = "sigma_mol_m3")]
    pub sigma: f64,
    #[serde(default)]
    pub provenance: Option<String>,
}

impl RejectionRecord {
    /// Observed rejection `1 − μ/C_f`.
    pub fn rejection(&self) -> f64 {
        if self.feed > 0.0 {
            1.0 - self.permeate / self.feed
        } else {
            0.0
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        let named = [
            ("feed_mol_m3", self.feed),
            ("jv_m_s", self.jv),
            ("permeate_mol_m3", self.permeate),
            ("sigma_mol_m3", self.sigma),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
            if v < 0.0 {
                return Err(format!("{name} is negative ({v})"));
            }
        }
        if self.experiment_id.is_empty() || self.ion.is_empty() {
            return Err("experiment_id and ion must be non-empty".into());
        }
        Ok(())
    }
}

const COLUMNS: [&str; 7] = [
    "experiment_id",
    "ion",
    "z",
    "feed_mol_m3",
    "jv_m_s",
    "permeate_mol_m3",
    "sigma_mol_m3",
];

/// Parses the dataset CSV. Line numbers in errors count the header as 1.
pub fn read_records<R: Read>(input: R) -> Result<Vec<RejectionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    for col in COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing column {col}"),
            });
        }
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let rec: RejectionRecord = row.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        rec.check().map_err(|message| Error::Parse { line, message })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<RejectionRecord>> {
    read_records(std::fs::File::open(path)?)
}

/// Writes records with full round-trip precision. A provenance column is
/// emitted when any record carries one.
pub fn write_records<W: Write>(out: W, records: &[RejectionRecord]) -> Result<()> {
    let with_provenance = records.iter().any(|r| r.provenance.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if with_provenance {
        header.push("provenance");
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.experiment_id.clone(),
            r.ion.clone(),
            r.z.to_string(),
            format!("{:?}", r.feed),
            format!("{:?}", r.jv),
            format!("{:?}", r.permeate),
            format!("{:?}", r.sigma),
        ];
        if with_provenance {
            row.push(r.provenance.clone().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One ion concentration observed at one flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Index into the experiment's species.
    pub species: usize,
    /// Index into the experiment's flux list.
    pub flux: usize,
    pub permeate: f64,
    pub sigma: f64,
}

/// Records sharing one feed, arranged for a single rejection-curve solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub id: String,
    pub feed: MixtureState,
    /// Ascending, de-duplicated.
    pub fluxes: Vec<f64>,
    pub observations: Vec<Observation>,
}

impl Experiment {
    pub fn feed_of(&self, obs: &Observation) -> f64 {
        self.feed.concentrations()[obs.species]
    }
}

/// Groups records by `experiment_id` (in order of first appearance) and
/// validates each group: valences must match the ion database, every ion
/// must have a single feed concentration, and the feed must be neutral.
pub fn group_experiments(records: &[RejectionRecord], db: &IonDatabase) -> Result<Vec<Experiment>> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.experiment_id.as_str()) {
            order.push(&r.experiment_id);
        }
    }
    order
        .into_iter()
        .map(|id| {
            let rows: Vec<&RejectionRecord> = records.iter().filter(|r| r.experiment_id == id).collect();
            build_experiment(id, &rows, db)
        })
        .collect()
}

fn build_experiment(id: &str, rows: &[&RejectionRecord], db: &IonDatabase) -> Result<Experiment> {
    let mut species: Vec<IonSpecies> = Vec::new();
    let mut feed: Vec<f64> = Vec::new();
    for r in rows {
        let ion = db.require(&r.ion)?;
        if ion.valence() != r.z {
            return Err(Error::Validation(format!(
                "experiment {id}: {} has z = {} but the ion database says {}",
                r.ion,
                r.z,
                ion.valence()
            )));
        }
        match species.iter().position(|s| s.name() == r.ion) {
            Some(j) => {
                if (feed[j] - r.feed).abs() > 1e-9 * feed[j].abs().max(r.feed.abs()) {
                    return Err(Error::Validation(format!(
                        "experiment {id}: inconsistent feed for {} ({} vs {})",
                        r.ion, feed[j], r.feed
                    )));
                }
            }
            None => {
                species.push(ion);
                feed.push(r.feed);
            }
        }
    }
    let state = MixtureState::from_concentrations(species.into(), feed)?;
    let state = validate_feed(&state, FEED_NEUTRALITY_TOL, FEED_REPAIR_THRESHOLD)
        .map_err(|e| Error::Validation(format!("experiment {id}: {e}")))?;

    let mut fluxes: Vec<f64> = rows.iter().map(|r| r.jv).collect();
    fluxes.sort_by(f64::total_cmp);
    fluxes.dedup();
    let observations = rows
        .iter()
        .map(|r| Observation {
            species: state.index_of(&r.ion).expect("species registered above"),
            flux: fluxes.iter().position(|&f| f == r.jv).expect("flux registered above"),
            permeate: r.permeate,
            sigma: r.sigma,
        })
        .collect();
    Ok(Experiment {
        id: id.to_string(),
        feed: state,
        fluxes,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "experiment_id,ion,z,feed_mol_m3,jv_m_s,permeate_mol_m3,sigma_mol_m3
e1,Na+,1,10,1e-5,4,0.1
e1,Cl-,-1,10,1e-5,4,0.1
e1,Na+,1,10,5e-6,6,0.2
e1,Cl-,-1,10,5e-6,6,0
e2,Mg++,2,5,1e-5,1,0.05
e2,SO4--,-2,5,1e-5,1,0.05
";

    #[test]
    fn parses_and_groups() {
        let recs = read_records(SAMPLE.as_bytes()).unwrap();
        assert_eq!(recs.len(), 6);
        assert!((recs[0].rejection() - 0.6).abs() < 1e-15);
        let exps = group_experiments(&recs, &IonDatabase::builtin()).unwrap();
        assert_eq!(exps.len(), 2);
        assert_eq!(exps[0].fluxes, vec![5e-6, 1e-5]);
        assert_eq!(exps[0].observations.len(), 4);
        assert_eq!(exps[0].observations[0].flux, 1);
        assert_eq!(exps[1].feed.concentrations(), &[5.0, 5.0]);
    }

    #[test]
    fn header_only_is_empty() {
        let text = SAMPLE.lines().next().unwrap();
        assert!(read_records(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn negative_value_names_line() {
        let text = SAMPLE.replace("e2,Mg++,2,5,1e-5,1,0.05", "e2,Mg++,2,5,1e-5,-1,0.05");
        match read_records(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("permeate_mol_m3"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_number_names_line() {
        let text = SAMPLE.replace("e1,Cl-,-1,10,5e-6,6,0", "e1,Cl-,-1,ten,5e-6,6,0");
        assert!(matches!(
            read_records(text.as_bytes()),
            Err(Error::Parse { line: 5, .. })
        ));
    }

    #[test]
    fn inconsistent_feed_rejected() {
        let text = SAMPLE.replace("e1,Na+,1,10,5e-6", "e1,Na+,1,11,5e-6");
        let recs = read_records(text.as_bytes()).unwrap();
        assert!(matches!(
            group_experiments(&recs, &IonDatabase::builtin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn non_neutral_feed_rejected() {
        let text = SAMPLE
            .replace("e2,SO4--,-2,5", "e2,SO4--,-2,2")
            .replace("e2,Mg++,2,5", "e2,Mg++,2,5");
        let recs = read_records(text.as_bytes()).unwrap();
        assert!(matches!(
            group_experiments(&recs, &IonDatabase::builtin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn valence_mismatch_rejected() {
        let text = SAMPLE.replace("e2,Mg++,2", "e2,Mg++,1");
        let recs = read_records(text.as_bytes()).unwrap();
        assert!(matches!(
            group_experiments(&recs, &IonDatabase::builtin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut recs = read_records(SAMPLE.as_bytes()).unwrap();
        recs[0].permeate = 0.1 + 0.2;
        recs[1].provenance = Some("simulated".into());
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back[0].permeate, 0.1 + 0.2);
        assert_eq!(back[1].provenance.as_deref(), Some("simulated"));
        assert_eq!(back[0].provenance, None);
        assert_eq!(back.len(), recs.len());
    }
}
