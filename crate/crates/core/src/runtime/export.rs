use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{render_transcript_step, RuntimeError, Simulation, SimulationConfig, StepRecord};

pub const MANIFEST_FILE: &str = "run_manifest.toml";
pub const STEPS_FILE: &str = "steps.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MATRIX_FILE: &str = "interaction_matrix.csv";
pub const TRANSCRIPT_FILE: &str = "transcript.txt";
pub const MANIFEST_FORMAT: u32 = 1;

pub fn world_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Everything needed to rerun a run: the full configuration and the digest
/// of the world definition it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub world_sha256: String,
    pub config: SimulationConfig,
}

impl RunManifest {
    pub fn for_simulation(sim: &Simulation) -> Self {
        Self {
            format: MANIFEST_FORMAT,
            world_sha256: sim.world_digest().to_string(),
            config: sim.config().clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String, RuntimeError> {
        toml::to_string(self).map_err(|e| RuntimeError::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path).map_err(|e| RuntimeError::io(path, e))?;
        let m: Self = toml::from_str(&text).map_err(|e| RuntimeError::Manifest(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(RuntimeError::Manifest(format!("unsupported manifest format {}", m.format)));
        }
        Ok(m)
    }

    /// Builds a fresh simulation from the manifest, refusing a changed world.
    pub fn simulation(&self) -> Result<Simulation, RuntimeError> {
        let sim = Simulation::new(self.config.clone())?;
        if sim.world_digest() != self.world_sha256 {
            return Err(RuntimeError::Manifest(format!(
                "world definition changed since the run (digest {} != {})",
                sim.world_digest(),
                self.world_sha256
            )));
        }
        Ok(sim)
    }
}

/// Streams a run to disk: the manifest first, then one JSON line per record
/// flushed as soon as its step completes, then the metrics tables.
pub struct RunWriter {
    dir: PathBuf,
    steps: BufWriter<File>,
    transcript: Option<BufWriter<File>>,
}

fn create(path: &Path) -> Result<BufWriter<File>, RuntimeError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RuntimeError::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), RuntimeError> {
    std::fs::write(path, contents).map_err(|e| RuntimeError::io(path, e))
}

impl RunWriter {
    /// Creates the directory and its files; fails before any step runs if
    /// the location is not writable.
    pub fn create(dir: &Path, manifest: &RunManifest) -> Result<Self, RuntimeError> {
        std::fs::create_dir_all(dir).map_err(|e| RuntimeError::io(dir, e))?;
        write_file(&dir.join(MANIFEST_FILE), &manifest.to_toml()?)?;
        let steps = create(&dir.join(STEPS_FILE))?;
        let transcript = if manifest.config.transcript {
            Some(create(&dir.join(TRANSCRIPT_FILE))?)
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            steps,
            transcript,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_step(&mut self, sim: &Simulation, records: &[StepRecord]) -> Result<(), RuntimeError> {
        let path = self.dir.join(STEPS_FILE);
        for r in records {
            writeln!(self.steps, "{}", r.to_json_line()).map_err(|e| RuntimeError::io(&path, e))?;
        }
        self.steps.flush().map_err(|e| RuntimeError::io(&path, e))?;
        if let Some(t) = &mut self.transcript {
            let path = self.dir.join(TRANSCRIPT_FILE);
            let step = records.first().map_or(sim.completed_steps(), |r| r.step);
            t.write_all(render_transcript_step(step, &sim.ledger().render_line(), records).as_bytes())
                .and_then(|_| t.flush())
                .map_err(|e| RuntimeError::io(&path, e))?;
        }
        Ok(())
    }

    /// Writes the metrics tables for everything completed so far.
    pub fn write_tables(&self, sim: &Simulation) -> Result<(), RuntimeError> {
        write_file(&self.dir.join(METRICS_FILE), &sim.metrics().to_csv())?;
        write_file(&self.dir.join(MATRIX_FILE), &sim.world().interaction_matrix().to_csv())
    }
}

/// Runs the simulation to completion, exporting everything into `dir`.
pub fn run_to_dir(sim: &mut Simulation, dir: &Path) -> Result<(), RuntimeError> {
    let mut writer = RunWriter::create(dir, &RunManifest::for_simulation(sim))?;
    let result = sim.run(|s, records| writer.write_step(s, records));
    writer.write_tables(sim)?;
    result
}
