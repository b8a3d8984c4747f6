use std::io::Write;
use std::path::Path;

use ionflux::calibrate::{group_experiments, read_records, Experiment, RejectionRecord};
use ionflux::chem::{validate_feed, IonDatabase, MixtureState, FEED_NEUTRALITY_TOL, FEED_REPAIR_THRESHOLD};
use ionflux::{Error, Result};

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Feed file: a JSON object mapping ion names to concentrations
/// [mol/m³], in column order.
pub fn parse_feed(text: &str, db: &IonDatabase) -> Result<MixtureState> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
    if map.is_empty() {
        return Err(Error::InvalidFeed("feed lists no ions".into()));
    }
    let mut species = Vec::with_capacity(map.len());
    let mut conc = Vec::with_capacity(map.len());
    for (name, v) in &map {
        let c = v
            .as_f64()
            .ok_or_else(|| Error::InvalidFeed(format!("{name}: concentration must be a number")))?;
        species.push(db.require(name)?);
        conc.push(c);
    }
    let state = MixtureState::from_concentrations(species.into(), conc)?;
    validate_feed(&state, FEED_NEUTRALITY_TOL, FEED_REPAIR_THRESHOLD)
}

/// Records of a rejection CSV together with their grouping into
/// experiments.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<RejectionRecord>,
    pub experiments: Vec<Experiment>,
}

pub(crate) fn parse_dataset(bytes: &[u8], name: &str, db: &IonDatabase) -> Result<Dataset> {
    let records = read_records(bytes)?;
    let experiments = group_experiments(&records, db)?;
    if records.is_empty() {
        log::warn!("{name}: dataset is empty");
    } else {
        log::info!("{name}: {} records in {} experiments", records.len(), experiments.len());
    }
    Ok(Dataset { records, experiments })
}

/// Reads, groups and validates a rejection CSV.
pub fn load_dataset(path: &Path, db: &IonDatabase) -> Result<Dataset> {
    parse_dataset(&std::fs::read(path)?, &path.display().to_string(), db)
}
