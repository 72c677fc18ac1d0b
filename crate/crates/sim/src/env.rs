//! Episodic environment paying the hybrid flow-derived reward.

use deltaflow_core::flow::delta_step;
use deltaflow_core::noise::{perturb_flow, NoisePreset, BASE_DRIFT, BASE_SIGMA};
use deltaflow_core::pipeline::{spread_indices, subsample_indices};
use deltaflow_core::reward::{
    calibrate_rotation_scale, flow_match_reward, keypoint_endpoint_reward, pose_match_reward,
    Events, PhaseMachine, PlanarPose, RewardScale,
};
use deltaflow_core::rng::derive_seed;
use deltaflow_core::{
    align_flow_index, centroid, delta_flow, DeltaFlow, DeltaStep, KeypointFlow,
    RewardPhase, RewardVariant, Vec2, MIN_VISIBLE,
};

use crate::error::{Result, SimError};
use crate::expert::{planar_pose, scripted_expert, ExpertDemo, ScriptedExpert};
use crate::observation::Observation;
use crate::task::TaskKind;
use crate::tracker::{oracle_track_subset, to_pixels};
use crate::world::{Action, World};
use crate::{ACTION_REPEAT, LOOKAHEAD, MAX_EPISODE_STEPS};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub task: TaskKind,
    pub reward: RewardVariant,
    pub noise: NoisePreset,
    /// Keypoints subsampled from the tracked object.
    pub keypoints: usize,
    pub lookahead: usize,
    pub max_steps: usize,
    pub action_repeat: usize,
    /// Keep the episode running after success (the completed phase is
    /// absorbing). Evaluation turns this off.
    pub continue_after_success: bool,
    /// Derive the rotation scale from each reference flow.
    pub calibrate_rotation: bool,
    pub scale: RewardScale,
}

impl EnvConfig {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            reward: RewardVariant::DeltaFlow,
            noise: NoisePreset::NONE,
            keypoints: deltaflow_core::pipeline::DEFAULT_KEYPOINTS,
            lookahead: LOOKAHEAD,
            max_steps: MAX_EPISODE_STEPS,
            action_repeat: ACTION_REPEAT,
            continue_after_success: false,
            calibrate_rotation: true,
            scale: RewardScale::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.keypoints < MIN_VISIBLE {
            return Err(SimError::Config(format!(
                "keypoints must be at least {MIN_VISIBLE}, got {}",
                self.keypoints
            )));
        }
        if self.max_steps == 0 || self.action_repeat == 0 {
            return Err(SimError::Config("max_steps and action_repeat must be positive".into()));
        }
        self.noise.validate()?;
        self.scale.validate()?;
        Ok(())
    }
}

/// The reference an episode is scored against. Frame 0 is the last frame
/// before contact; the episode's tracking clock starts at its own subgoal
/// event, one reference frame per policy step, holding the final frame.
#[derive(Debug, Clone)]
pub struct Reference {
    pub flow: KeypointFlow,
    /// Object poses per frame, needed by the pose-trajectory baseline.
    pub poses: Option<Vec<PlanarPose>>,
    /// Which tracked object keypoints the flow columns correspond to.
    pub keypoint_indices: Option<Vec<usize>>,
}

impl Reference {
    /// Subsamples and perturbs an expert demo.
    pub fn from_demo(demo: &ExpertDemo, config: &EnvConfig, seed: u64) -> Result<Self> {
        let total = demo.flow.keypoints();
        if config.keypoints > total {
            return Err(SimError::Config(format!(
                "requested {} keypoints but the object has {total}",
                config.keypoints
            )));
        }
        let indices = spread_indices(&demo.flow, config.keypoints, derive_seed(seed, "sim/keypoints", 0));
        let flow = demo.reference_flow()?.select_keypoints(&indices)?;
        let flow = perturb_flow(&flow, config.noise, BASE_SIGMA, BASE_DRIFT, derive_seed(seed, "sim/noise", 0))?;
        Ok(Self {
            flow,
            poses: Some(demo.poses[demo.contact_frame()..].to_vec()),
            keypoint_indices: Some(indices),
        })
    }
}

/// What one environment step produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    /// The tracking term passed to the phase machine.
    pub r_track: f64,
    pub events: Events,
    pub phase: RewardPhase,
    pub done: bool,
    pub success: bool,
    pub flow_index: usize,
}

/// Anything that can pick actions in an [`Env`].
pub trait Policy {
    fn act(&mut self, env: &Env) -> Action;
}

impl Policy for ScriptedExpert {
    fn act(&mut self, env: &Env) -> Action {
        match env.world() {
            Some(w) => ScriptedExpert::act(self, w),
            None => Action::new(0.0, 0.0, 0.0, -1.0),
        }
    }
}

struct Episode {
    world: World,
    reference: Reference,
    ref_delta: DeltaFlow,
    indices: Vec<usize>,
    first: Vec<Vec2>,
    first_visible: Vec<bool>,
    delta: DeltaStep,
    centroid: Vec2,
    machine: PhaseMachine,
    step: usize,
    /// Last frame before the subgoal step, once reached.
    contact: Option<usize>,
    done: bool,
    success: bool,
    observation: Observation,
    initial_centroid: [f64; 3],
}

pub struct Env {
    config: EnvConfig,
    episode: Option<Episode>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, episode: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn world(&self) -> Option<&World> {
        self.episode.as_ref().map(|e| &e.world)
    }

    pub fn observation(&self) -> Option<&Observation> {
        self.episode.as_ref().map(|e| &e.observation)
    }

    pub fn reference(&self) -> Option<&Reference> {
        self.episode.as_ref().map(|e| &e.reference)
    }

    pub fn phase(&self) -> Option<RewardPhase> {
        self.episode.as_ref().map(|e| e.machine.phase())
    }

    /// Reward scale in effect for the current episode.
    pub fn scale(&self) -> Option<RewardScale> {
        self.episode.as_ref().map(|e| *e.machine.scale())
    }

    pub fn step_count(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.step)
    }

    /// Observed delta-flow step at the current frame.
    pub fn observed_delta(&self) -> Option<DeltaStep> {
        self.episode.as_ref().map(|e| e.delta)
    }

    /// Reference delta-flow step aligned to the current frame.
    pub fn reference_delta(&self) -> Option<DeltaStep> {
        let e = self.episode.as_ref()?;
        Some(e.ref_delta.step(Self::aligned(e, e.step)))
    }

    /// Starts an episode whose reference comes from the scripted expert on the
    /// same seeded layout.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let demo = scripted_expert(self.config.task, seed, self.config.max_steps)?;
        let reference = Reference::from_demo(&demo, &self.config, seed)?;
        self.reset_with_reference(seed, reference)
    }

    /// Starts an episode against an externally supplied reference.
    pub fn reset_with_reference(&mut self, seed: u64, reference: Reference) -> Result<Observation> {
        let n = reference.flow.keypoints();
        let indices = match &reference.keypoint_indices {
            Some(ix) => ix.clone(),
            None => subsample_indices(
                crate::task::TEMPLATE_KEYPOINTS,
                n,
                derive_seed(seed, "sim/keypoints", 0),
            ),
        };
        if indices.len() != n {
            return Err(SimError::Config(format!(
                "reference has {n} keypoints but {} indices",
                indices.len()
            )));
        }
        match self.config.reward {
            RewardVariant::PoseTraj if reference.poses.is_none() => {
                return Err(SimError::MissingReference("object poses".into()))
            }
            _ => {}
        }
        let ref_delta = delta_flow(&reference.flow)?;
        let mut scale = self.config.scale;
        if self.config.calibrate_rotation {
            scale.c_rot = calibrate_rotation_scale(&reference.flow, &ref_delta)?;
        }
        let world = World::new(self.config.task.layout(seed));
        let (first, first_visible) = oracle_track_subset(&world, &indices);
        let c0 = centroid(&first, &first_visible, MIN_VISIBLE)?;
        let p0 = world.object().position;
        let mut episode = Episode {
            world,
            reference,
            ref_delta,
            indices,
            first,
            first_visible,
            delta: DeltaStep::default(),
            centroid: c0,
            machine: PhaseMachine::new(scale),
            step: 0,
            contact: None,
            done: false,
            success: false,
            observation: placeholder_observation(),
            initial_centroid: [p0.x, p0.y, 0.0],
        };
        episode.observation = self.build_observation(&episode)?;
        let obs = episode.observation.clone();
        self.episode = Some(episode);
        Ok(obs)
    }

    /// Reference frame for episode frame `frame`; before contact the
    /// reference is taken to start at the current frame.
    fn aligned(e: &Episode, frame: usize) -> usize {
        let start = e.contact.unwrap_or(e.step);
        frame.saturating_sub(start).min(e.reference.flow.frames() - 1)
    }

    fn build_observation(&self, e: &Episode) -> Result<Observation> {
        let k = self.config.lookahead;
        let mut lookahead_centroids = Vec::with_capacity(k);
        let mut lookahead_deltas = Vec::with_capacity(k);
        for j in 1..=k {
            let idx = Self::aligned(e, e.step + j);
            lookahead_centroids.push(e.ref_delta.centroids[idx]);
            lookahead_deltas.push(Observation::delta_array(&e.ref_delta.step(idx)));
        }
        let progress = e.step as f64 / self.config.max_steps as f64;
        Ok(Observation {
            robot: Observation::robot_state(&e.world, progress),
            centroid: e.centroid,
            delta: Observation::delta_array(&e.delta),
            lookahead_centroids,
            lookahead_deltas,
            initial_centroid_3d: e.initial_centroid,
        })
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let config = self.config.clone();
        let mut e = self.episode.take().ok_or(SimError::NotStarted)?;
        if e.done {
            self.episode = Some(e);
            return Err(SimError::EpisodeFinished);
        }
        let result = self.advance(&mut e, action, &config);
        self.episode = Some(e);
        result
    }

    fn advance(&self, e: &mut Episode, action: &Action, config: &EnvConfig) -> Result<StepOutcome> {
        if !action.is_finite() {
            return Err(SimError::InvalidAction);
        }
        let subgoal_done = e.world.step(action, config.action_repeat)?;
        if subgoal_done {
            e.contact = Some(e.step);
        }
        e.step += 1;
        let task_done = e.world.success();
        let (cur, cur_vis) = oracle_track_subset(&e.world, &e.indices);
        // keep the last estimate while the object is mostly hidden
        if let Ok((c, d)) = delta_step(&e.first, &e.first_visible, &cur, &cur_vis) {
            e.centroid = c;
            e.delta = d;
        }
        let flow_index = Self::aligned(e, e.step);
        let scale = *e.machine.scale();
        let r_track = match config.reward {
            RewardVariant::DeltaFlow => {
                flow_match_reward(&e.delta, &e.ref_delta.step(flow_index), &scale)
            }
            RewardVariant::PoseTraj => {
                let poses = e.reference.poses.as_ref().expect("checked at reset");
                let idx = align_flow_index(flow_index, e.reference.flow.frames(), poses.len())?;
                pose_match_reward(&planar_pose(&e.world), &poses[idx], &scale)
            }
            RewardVariant::KeypointEndpoint if e.step == config.max_steps => {
                let last = e.reference.flow.frames() - 1;
                let robot: Vec<Vec2> = e.world.object_keypoints();
                let robot: Vec<Vec2> = e.indices.iter().map(|&i| to_pixels(robot[i])).collect();
                keypoint_endpoint_reward(&robot, e.reference.flow.frame(last), &scale)?
            }
            RewardVariant::KeypointEndpoint | RewardVariant::SparseOnly => 0.0,
        };
        let events = Events { subgoal_done, task_done };
        let reward = e.machine.advance(e.world.grip_distance(), r_track, events)?;
        e.success |= task_done;
        let stop_on_success = task_done && !config.continue_after_success;
        e.done = e.step >= config.max_steps || stop_on_success;
        e.observation = self.build_observation(e)?;
        Ok(StepOutcome {
            observation: e.observation.clone(),
            reward,
            r_track,
            events,
            phase: e.machine.phase(),
            done: e.done,
            success: e.success,
            flow_index,
        })
    }

    /// Runs one episode, returning per-step outcomes.
    pub fn rollout(&mut self, policy: &mut dyn Policy, seed: u64) -> Result<Vec<StepOutcome>> {
        self.reset(seed)?;
        self.run(policy)
    }

    /// Runs the already-reset episode to completion.
    pub fn run(&mut self, policy: &mut dyn Policy) -> Result<Vec<StepOutcome>> {
        let mut out = Vec::with_capacity(self.config.max_steps);
        loop {
            let action = policy.act(self);
            let o = self.step(&action)?;
            let done = o.done;
            out.push(o);
            if done {
                return Ok(out);
            }
        }
    }
}

fn placeholder_observation() -> Observation {
    Observation {
        robot: [0.0; 7],
        centroid: Vec2::ZERO,
        delta: [0.0; 3],
        lookahead_centroids: Vec::new(),
        lookahead_deltas: Vec::new(),
        initial_centroid_3d: [0.0; 3],
    }
}
