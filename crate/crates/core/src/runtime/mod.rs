//! Turn loop, logging and the control surfaces around it.

mod config;
mod export;
mod perception;
mod record;
pub mod server;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{
    DriverConfig, MemoryConfig, ResourceConfig, SignalConfig, SimulationConfig, DEFAULT_GOAL, DEFAULT_STEPS,
};
pub use export::{run_to_dir, world_digest, RunManifest, RunWriter, MANIFEST_FILE, MATRIX_FILE, METRICS_FILE, STEPS_FILE, TRANSCRIPT_FILE};
pub use perception::{clause_position, split_clauses, Perceiver, RecentTokens};
pub use record::{render_transcript_step, MetricsSeries, StepRecord};

use crate::action_space::reduce_action_space;
use crate::backend::{self, Backend, BackendError};
use crate::driver::{
    compute_arousal, compute_bias, compute_dominance, compute_pleasure, update_driver, AffectSignals, DriverState,
    Pad,
};
use crate::field::{field_similarity, PhenomenalField};
use crate::ltrha::{
    compose_action, mark_action, matrix_step, social_gate, ComposeContext, HabitusRecord, LtrhaError,
    ResourceLedger, SubEnvironment, MIN_MATRIX_AGENTS,
};
use crate::memory::{imagine, ConsciousnessChannel, MemoryFrame, MemoryStore, PersistenceDrift, ProtentionPredictor};
use crate::world::{Action, Outcome, WorldDefinition, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Ltrha(#[from] LtrhaError),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
}

impl RuntimeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Everything one agent carries between turns.
pub struct AgentRuntime {
    pub id: String,
    pub goal: String,
    pub driver: DriverState,
    pub memory: MemoryStore,
    pub channel: ConsciousnessChannel,
    pub habitus: HabitusRecord,
    recent: RecentTokens,
    acted: RecentTokens,
    previous_protention: Option<PhenomenalField>,
    desire: f64,
    pain: f64,
    rng: ChaCha8Rng,
}

impl AgentRuntime {
    fn new(id: &str, stream: u64, config: &SimulationConfig) -> Result<Self, RuntimeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        Ok(Self {
            id: id.to_string(),
            goal: config.goal.clone(),
            driver: DriverState::new(config.driver.initial, config.driver.weights)
                .map_err(|e| RuntimeError::Config(e.to_string()))?,
            memory: MemoryStore::new(config.memory.capacity, config.memory.compression_window)?,
            channel: ConsciousnessChannel::default(),
            habitus: HabitusRecord::new(),
            recent: RecentTokens::new(config.memory.retention_window),
            acted: RecentTokens::new(config.memory.retention_window),
            previous_protention: None,
            desire: 0.0,
            pain: 0.0,
            rng,
        })
    }
}

/// A running simulation: world, agents, resources and the logs they produce.
pub struct Simulation {
    config: SimulationConfig,
    world_digest: String,
    world: WorldState,
    agents: BTreeMap<String, AgentRuntime>,
    ledger: ResourceLedger,
    backend: Arc<dyn Backend>,
    predictor: Box<dyn ProtentionPredictor>,
    perceiver: Perceiver,
    completed: u64,
    revision: u64,
    records: Vec<StepRecord>,
    metrics: MetricsSeries,
}

/// Loads the configured world definition and its text digest.
pub fn load_world(config: &SimulationConfig) -> Result<(WorldDefinition, String), RuntimeError> {
    let text = match &config.world {
        Some(path) => std::fs::read_to_string(path).map_err(|e| RuntimeError::io(path, e))?,
        None => crate::world::definition::DEFAULT_WORLD.to_string(),
    };
    let def = WorldDefinition::parse(&text)?;
    Ok((def, world_digest(&text)))
}

impl Simulation {
    /// Builds the simulation and its backend from configuration. The
    /// simulation seed also seeds the mock backend.
    pub fn new(config: SimulationConfig) -> Result<Self, RuntimeError> {
        let mut backend_cfg = config.backend.clone();
        backend_cfg.seed = Some(config.seed);
        backend_cfg.apply_env();
        let backend = backend::from_config(&backend_cfg)?;
        Self::with_backend(config, backend)
    }

    pub fn with_backend(config: SimulationConfig, backend: Arc<dyn Backend>) -> Result<Self, RuntimeError> {
        config.validate()?;
        let (def, digest) = load_world(&config)?;
        let world = WorldState::from_definition(&def)?;
        let ids = world.agent_ids();
        if !config.agents.is_empty() {
            let mut wanted = config.agents.clone();
            wanted.sort();
            if wanted != ids {
                return Err(RuntimeError::Config(format!(
                    "configured agents {:?} do not match the world's agents {ids:?}",
                    config.agents
                )));
            }
        }
        let mut agents = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            agents.insert(id.clone(), AgentRuntime::new(id, i as u64 + 1, &config)?);
        }
        let r = &config.resources;
        let ledger = ResourceLedger::new(ids.iter().cloned(), r.s_min, r.s_max, r.balance_bound)?;
        let areas: Vec<String> = world.areas().iter().map(|a| a.name.clone()).collect();
        let metrics = MetricsSeries::new(&ids, &areas, world.interaction_matrix());
        Ok(Self {
            predictor: Box::new(PersistenceDrift::new(config.blend)),
            perceiver: Perceiver::new(config.seed, config.backend.embedding_dimension),
            world_digest: digest,
            config,
            world,
            agents,
            ledger,
            backend,
            completed: 0,
            revision: 0,
            records: Vec::new(),
            metrics,
        })
    }

    /// Replaces the protention predictor.
    pub fn set_predictor(&mut self, predictor: Box<dyn ProtentionPredictor>) {
        self.predictor = predictor;
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn world_digest(&self) -> &str {
        &self.world_digest
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    pub fn agent(&self, id: &str) -> Option<&AgentRuntime> {
        self.agents.get(id)
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn metrics(&self) -> &MetricsSeries {
        &self.metrics
    }

    pub fn completed_steps(&self) -> u64 {
        self.completed
    }

    /// Bumped on every change to the world or the step counter.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn is_finished(&self) -> bool {
        self.completed >= self.config.steps
    }

    /// Observation and action space, without consuming pending messages.
    pub fn observe(&self, agent: &str) -> Result<(String, Vec<String>), RuntimeError> {
        Ok((self.world.observe(agent)?, self.world.action_space_for(agent)?))
    }

    /// Applies an externally chosen action directly to the world.
    pub fn act(&mut self, agent: &str, action: &str) -> Result<Outcome, RuntimeError> {
        let outcome = self.world.apply_action(agent, action)?;
        if outcome.is_success() {
            self.revision += 1;
        }
        Ok(outcome)
    }

    /// Runs one time step: every agent takes a turn in id order, then crowded
    /// areas reallocate resources. Returns the step's records.
    pub fn step(&mut self) -> Result<Vec<StepRecord>, RuntimeError> {
        let step = self.completed + 1;
        let ids: Vec<String> = self.agents.keys().cloned().collect();
        let mut records = Vec::with_capacity(ids.len());
        let mut logged_actions = BTreeMap::new();
        for id in &ids {
            let record = self.agent_turn(id, step)?;
            logged_actions.insert(id.clone(), record.action.clone());
            records.push(record);
        }

        let pads: BTreeMap<String, Pad> = self.agents.iter().map(|(k, a)| (k.clone(), a.driver.pad)).collect();
        let goals: BTreeMap<String, String> = self.agents.iter().map(|(k, a)| (k.clone(), a.goal.clone())).collect();
        let mut topics = BTreeMap::new();
        let area_names: Vec<String> = self.world.areas().iter().map(|a| a.name.clone()).collect();
        for area in &area_names {
            let env = SubEnvironment::from_world(&self.world, area, &pads)?;
            topics.insert(area.clone(), env.topic);
            if env.occupants.len() < MIN_MATRIX_AGENTS {
                continue;
            }
            if let Err(e) = matrix_step(&mut self.ledger, &env, &logged_actions, &goals, self.backend.as_ref()) {
                for r in records.iter_mut().filter(|r| env.occupants.contains(&r.agent)) {
                    r.faults.push(format!("allocation skipped in {area}: {e}"));
                }
            }
        }
        let balances = self.ledger.balances().clone();
        for r in &mut records {
            r.resources = balances.clone();
        }

        let drivers = self.agents.iter().map(|(k, a)| (k.clone(), a.driver.driver)).collect();
        self.metrics
            .push_step(&drivers, &pads, &balances, &topics, self.world.interaction_matrix());
        self.records.extend(records.iter().cloned());
        self.completed = step;
        self.revision += 1;
        Ok(records)
    }

    fn agent_turn(&mut self, id: &str, step: u64) -> Result<StepRecord, RuntimeError> {
        let cfg = self.config.clone();
        let backend = Arc::clone(&self.backend);
        let mut faults = Vec::new();

        let observation = self.world.observe(id)?;
        let place = self.world.agent(id)?.area.clone();
        self.world.clear_inbox(id)?;
        let agent = self.agents.get_mut(id).expect("agent ids come from the map");

        // Perception, recollection, imagination.
        let pi = self
            .perceiver
            .field(&observation, &agent.recent, backend.as_ref(), &mut faults);
        let activated = agent
            .memory
            .activate(&pi, cfg.memory.top_k, &cfg.blend, &mut agent.rng)
            .unwrap_or_else(|e| {
                faults.push(format!("memory activation failed: {e}"));
                PhenomenalField::empty()
            });
        let imagination = imagine(&pi, &activated, &cfg.blend, &mut agent.rng).unwrap_or_else(|e| {
            faults.push(format!("imagination failed: {e}"));
            pi.clone()
        });

        // Emotion and driver.
        let signals = AffectSignals::new(agent.desire, agent.pain).unwrap_or_default();
        agent.desire = 0.0;
        agent.pain = 0.0;
        let retention = agent.channel.retention_slice();
        let t_eff = retention.len() as u64 + 1;
        let pad = Pad {
            pleasure: compute_pleasure(&signals),
            arousal: compute_arousal(&pi, &retention, t_eff, cfg.driver.diff_scale, &cfg.blend),
            dominance: compute_dominance(&pi, agent.previous_protention.as_ref(), cfg.driver.diff_scale, &cfg.blend),
        };
        agent.driver.set_pad(pad);
        match compute_bias(&agent.driver) {
            Ok(bias) => {
                update_driver(&mut agent.driver, bias);
            }
            Err(e) => faults.push(format!("driver update skipped: {e}")),
        }
        let driver = agent.driver.driver;

        agent.channel.primal_impression = pi.clone();
        agent.channel.activated_memory = activated;
        agent.channel.imagination = imagination.clone();

        // Candidate actions: relevance pruning, then protention ranking.
        let space = self.world.action_space_for(id)?;
        let kept = if space.is_empty() {
            Vec::new()
        } else {
            match reduce_action_space(&agent.goal, &space, cfg.elimination_threshold, backend.as_ref()) {
                Ok(r) => r.kept_texts(),
                Err(e) => {
                    faults.push(format!("action scoring failed, keeping every action: {e}"));
                    space.clone()
                }
            }
        };
        let goal_field = self
            .perceiver
            .field(&agent.goal, &RecentTokens::new(0), backend.as_ref(), &mut faults);
        let base = self
            .predictor
            .predict(&agent.channel, &imagination, driver)
            .unwrap_or_else(|e| {
                faults.push(format!("protention failed: {e}"));
                imagination.clone()
            });
        let mut scored: Vec<(String, f64, PhenomenalField)> = Vec::with_capacity(kept.len());
        for action in &kept {
            let row = self
                .perceiver
                .row(action, agent.acted.novelty(action), backend.as_ref(), &mut faults);
            let single = PhenomenalField::new(vec![row]).expect("one row is always consistent");
            let predicted = self
                .predictor
                .predict(&agent.channel, &single, driver)
                .unwrap_or(single);
            // Scored on the action's own part: against a short goal field the
            // base rows would otherwise win every pairing and tie all candidates.
            let score = field_similarity(&predicted, &goal_field, &cfg.blend).unwrap_or(0.0) * (1.0 + driver);
            let protention = base.concat(&predicted).unwrap_or(predicted);
            scored.push((action.clone(), score, protention));
        }
        // Stable: equal scores keep action-space order.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let ordered: Vec<String> = scored.iter().map(|(a, _, _)| a.clone()).collect();

        // Composition.
        let balance = self.ledger.balance(id)?;
        let pads: BTreeMap<String, Pad> = BTreeMap::from([(id.to_string(), pad)]);
        let topic = SubEnvironment::from_world(&self.world, &place, &pads)
            .map(|e| e.topic)
            .unwrap_or_default();
        let (thought, chosen) = if ordered.is_empty() {
            faults.push("no legal actions".into());
            (String::new(), None)
        } else {
            let summary = format!(
                "{} retained moments, {} remembered frames, {} imagined rows",
                agent.channel.retention.len(),
                agent.memory.len(),
                imagination.len()
            );
            let ctx = ComposeContext {
                observation: &observation,
                channel_summary: &summary,
                driver,
                habitus: &agent.habitus,
                balance,
                topic,
                goal: &agent.goal,
                actions: &ordered,
            };
            match compose_action(&ctx, backend.as_ref()) {
                Ok(c) => {
                    if c.defaulted {
                        faults.push("generator action outside the action space; used the top candidate".into());
                    }
                    if let Some(g) = c.goal {
                        agent.goal = g;
                    }
                    (c.thought, Some(c.action))
                }
                Err(e) => {
                    faults.push(format!("generation failed: {e}"));
                    let fallback = ordered
                        .iter()
                        .find(|a| a.starts_with("use ") && !a.contains(" in/on "))
                        .unwrap_or(&ordered[0])
                        .clone();
                    (String::new(), Some(fallback))
                }
            }
        };

        // Gate, act, learn.
        agent.channel.protention = base;
        if let Some(action) = &chosen {
            let stem = Action::parse(action).map_or_else(|| action.clone(), |a| a.stem());
            if let Some((_, _, pro)) = scored.iter().find(|(a, _, _)| *a == stem) {
                agent.channel.protention = pro.clone();
            }
        }
        let mut chat_target = None;
        agent.acted.push(chosen.as_deref().unwrap_or_default());
        let (logged, filtered, outcome) = match chosen {
            None => (String::new(), false, "no action".to_string()),
            Some(action) => {
                let gate = social_gate(balance, &mut agent.rng);
                if gate.executed {
                    let outcome = self.world.apply_action(id, &action)?;
                    if outcome.is_success() {
                        agent.desire += cfg.signals.desire_per_success;
                        agent.habitus.update(&place, &action, step);
                        if let Some(Action::Chat { target, .. }) = Action::parse(&action) {
                            chat_target = Some(target);
                        }
                    } else {
                        agent.pain += cfg.signals.pain_per_failure;
                    }
                    (mark_action(&action, true), false, outcome.to_string())
                } else {
                    agent.pain += cfg.signals.pain_per_filtered;
                    (mark_action(&action, false), true, "filtered".to_string())
                }
            }
        };

        agent.previous_protention = Some(agent.channel.protention.clone()).filter(|p| !p.is_empty());
        if !pi.is_empty() {
            if let Err(e) = agent.memory.store_frame(
                MemoryFrame::new(pi.clone(), step, pad.arousal, pad.pleasure),
                &cfg.blend,
                &mut agent.rng,
            ) {
                faults.push(format!("memory store failed: {e}"));
            }
            agent.channel.retain(pi, cfg.memory.retention_window);
        }
        agent.recent.push(&observation);
        if let Some(other) = chat_target.and_then(|t| self.agents.get_mut(&t)) {
            other.desire += cfg.signals.desire_per_received_chat;
        }

        Ok(StepRecord {
            step,
            agent: id.to_string(),
            place,
            observation,
            driver,
            emotion: pad.as_array(),
            thought,
            action: logged,
            filtered,
            outcome,
            resources: BTreeMap::new(),
            faults,
        })
    }

    /// Runs the remaining steps, handing each step's records to `sink`.
    pub fn run<F>(&mut self, mut sink: F) -> Result<(), RuntimeError>
    where
        F: FnMut(&Simulation, &[StepRecord]) -> Result<(), RuntimeError>,
    {
        while !self.is_finished() {
            let records = self.step()?;
            sink(self, &records)?;
        }
        Ok(())
    }
}
