//! Breadth-first tree search over reasoning states, executed on the
//! scheduler.
//!
//! The search keeps a frontier of states (token sequences). Each level
//! drafts `thoughts_per_state` continuations of every frontier state,
//! scores the resulting candidate states, and keeps the best `breadth` of
//! them; after the last level, the single best state generates the final
//! answer. Every generation step — thoughts, evaluations, and the final
//! answer — is a scheduled speculative run:
//!
//! * thought generation batches one run per frontier state, with
//!   `thoughts_per_state` drafter sequences sharing that state as their
//!   prompt;
//! * evaluation batches one run per level, with one sequence per candidate
//!   state prompted through [`EvalTemplate`];
//! * the final answer is a single-sequence run from the best state.
//!
//! Component seeds derive from the master seed and the component's place
//! in the search (kind, level, ordinal), so the whole tree is reproducible
//! and insensitive to scheduling mode.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{mix_seed, ModelPair, TokenId};
use crate::sampling::KConfig;
use crate::sched::{run, RunConfig, RunMetrics, SchedMode, TickParams};

/// Prompt wrapper turning a candidate state into an evaluation prompt:
/// `prefix ++ state ++ suffix`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTemplate {
    #[serde(default)]
    pub prefix: Vec<TokenId>,
    #[serde(default)]
    pub suffix: Vec<TokenId>,
}

impl EvalTemplate {
    fn apply(&self, state: &[TokenId]) -> Vec<TokenId> {
        let mut prompt =
            Vec::with_capacity(self.prefix.len() + state.len() + self.suffix.len());
        prompt.extend(&self.prefix);
        prompt.extend(state);
        prompt.extend(&self.suffix);
        prompt
    }

    fn overhead(&self) -> usize {
        self.prefix.len() + self.suffix.len()
    }
}

/// How an evaluation response maps to a scalar value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ValueParser {
    /// The first emitted token with id in `[min, max]` is the value.
    ScalarToken { min: u32, max: u32 },
    /// The first emitted token found in the map yields its value.
    ClassifierMap(Vec<(TokenId, f64)>),
}

impl ValueParser {
    /// Extracts a value from an evaluation response, or `None` when no
    /// token qualifies.
    pub fn parse(&self, response: &[TokenId]) -> Option<f64> {
        match self {
            ValueParser::ScalarToken { min, max } => response
                .iter()
                .find(|t| (*min..=*max).contains(&t.0))
                .map(|t| f64::from(t.0)),
            ValueParser::ClassifierMap(map) => response
                .iter()
                .find_map(|t| map.iter().find(|(tok, _)| tok == t).map(|&(_, v)| v)),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ValueParser::ScalarToken { min, max } if min > max => Err(Error::InvalidConfig(
                format!("scalar-token range [{min}, {max}] is empty"),
            )),
            ValueParser::ClassifierMap(map) if map.is_empty() => Err(Error::InvalidConfig(
                "classifier map must not be empty".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Scores a level's candidate states. The default implementation is the
/// model itself (prompt through the template, decode, parse); injecting a
/// deterministic evaluator makes search behavior testable in isolation.
pub trait Evaluator {
    /// Returns one value per candidate state, in order.
    fn evaluate_level(&mut self, level: usize, states: &[Vec<TokenId>]) -> Result<Vec<f64>>;
}

/// Search-shape and execution parameters of one tree build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Levels of thought expansion. Zero is allowed: the final answer is
    /// then generated straight from the prompt.
    pub depth: usize,
    /// Thought candidates drafted per frontier state.
    pub thoughts_per_state: usize,
    /// Frontier states kept per level.
    pub breadth: usize,
    /// Tokens per thought.
    pub thought_len: usize,
    /// Tokens per evaluation response.
    pub eval_len: usize,
    /// Tokens of the final answer; defaults to `thought_len`.
    #[serde(default)]
    pub final_len: Option<usize>,
    #[serde(default)]
    pub eval_template: EvalTemplate,
    pub value_parser: ValueParser,
    /// Value assumed when a response fails to parse (with a warning).
    #[serde(default)]
    pub default_value: f64,
    pub kconfig: KConfig,
    #[serde(default = "default_mode")]
    pub mode: SchedMode,
    #[serde(default)]
    pub ticks: TickParams,
    pub seed: u64,
}

fn default_mode() -> SchedMode {
    SchedMode::VirtualTime
}

impl TreeConfig {
    fn final_len(&self) -> usize {
        self.final_len.unwrap_or(self.thought_len)
    }

    fn validate(&self, models: &ModelPair, prompt_len: usize) -> Result<()> {
        if self.thoughts_per_state == 0 || self.breadth == 0 {
            return Err(Error::InvalidConfig(
                "thoughts_per_state and breadth must be positive".into(),
            ));
        }
        if self.thought_len == 0 || self.eval_len == 0 || self.final_len() == 0 {
            return Err(Error::InvalidConfig(
                "thought_len, eval_len and final_len must be positive".into(),
            ));
        }
        self.value_parser.validate()?;
        let max_context = models.target.max_context().min(models.draft.max_context());
        let deepest_state = prompt_len + self.depth * self.thought_len;
        let worst = (deepest_state + self.final_len())
            .max(self.eval_template.overhead() + deepest_state + self.eval_len);
        if worst + self.kconfig.depth() > max_context {
            return Err(Error::InvalidConfig(format!(
                "a depth-{} search from a length-{prompt_len} prompt needs contexts of \
                 up to {worst} tokens plus draft depth, beyond the model limit {max_context}",
                self.depth
            )));
        }
        Ok(())
    }
}

/// One node of the explored reasoning tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningNode {
    pub id: usize,
    /// `None` only for the root.
    pub parent: Option<usize>,
    /// Root is depth 0; thought levels start at 1.
    pub depth: usize,
    /// Tokens this node appends to its parent's state (the prompt for the
    /// root).
    pub tokens: Vec<TokenId>,
    /// Evaluator value; `None` for the root.
    pub score: Option<f64>,
    /// Whether the node survived its level's selection.
    pub selected: bool,
}

/// Arena of every state the search touched, plus the final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTree {
    pub nodes: Vec<ReasoningNode>,
    /// Node the final answer was generated from.
    pub final_node: usize,
    /// Tokens of the final answer (not part of any node's state).
    pub final_tokens: Vec<TokenId>,
}

impl ReasoningTree {
    /// Full token sequence of a node's state: prompt plus every thought on
    /// the path from the root.
    pub fn state_tokens(&self, id: usize) -> Vec<TokenId> {
        let mut path = Vec::new();
        let mut cursor = Some(id);
        while let Some(c) = cursor {
            path.push(c);
            cursor = self.nodes[c].parent;
        }
        let mut tokens = Vec::new();
        for &c in path.iter().rev() {
            tokens.extend(&self.nodes[c].tokens);
        }
        tokens
    }

    /// Writes one JSON object per node, root first.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for node in &self.nodes {
            serde_json::to_writer(&mut out, node)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Which part of the search a scheduled run served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    /// Thought generation (one run per frontier state).
    ThoughtGen,
    /// Candidate evaluation (one run per level).
    Eval,
    /// Final answer generation.
    Final,
}

/// Accounting record of one scheduled run inside a tree build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRun {
    pub component: Component,
    /// Thought level the run served (1-based; the final run reports the
    /// last level).
    pub level: usize,
    /// Position of the run within its component and level.
    pub ordinal: usize,
    pub metrics: RunMetrics,
}

/// Selection bookkeeping of one level, in candidate creation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    /// Node ids of every candidate generated at this level.
    pub candidates: Vec<usize>,
    /// Evaluator values, parallel to `candidates`.
    pub scores: Vec<f64>,
    /// Node ids that survived selection, best first.
    pub selected: Vec<usize>,
}

/// Everything one tree build produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeOutcome {
    pub tree: ReasoningTree,
    pub levels: Vec<LevelRecord>,
    pub runs: Vec<ComponentRun>,
    pub warnings: Vec<String>,
}

// Component tags for seed derivation; level and ordinal are packed beside
// the tag so every scheduled run inside a build draws from its own stream
// family.
const SALT_THOUGHT: u64 = 1;
const SALT_EVAL: u64 = 2;
const SALT_FINAL: u64 = 3;

fn component_seed(master: u64, tag: u64, level: usize, ordinal: usize) -> u64 {
    mix_seed(master, (tag << 40) | ((level as u64) << 20) | ordinal as u64)
}

/// Runs breadth-first reasoning-tree searches over one model pair.
pub struct TreeBuilder<'a> {
    models: &'a ModelPair,
    config: &'a TreeConfig,
    prompt: Vec<TokenId>,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(
        models: &'a ModelPair,
        config: &'a TreeConfig,
        prompt: Vec<TokenId>,
    ) -> Result<Self> {
        config.validate(models, prompt.len())?;
        Ok(TreeBuilder {
            models,
            config,
            prompt,
        })
    }

    /// Builds the tree with the model itself scoring candidates.
    pub fn build(&self) -> Result<TreeOutcome> {
        let mut evaluator = ModelEvaluator {
            models: self.models,
            config: self.config,
            runs: Vec::new(),
            warnings: Vec::new(),
        };
        let mut outcome = self.search(&mut evaluator)?;
        outcome.runs.extend(evaluator.runs);
        outcome.warnings.extend(evaluator.warnings);
        outcome.runs.sort_by_key(|r| (r.level, component_rank(r.component), r.ordinal));
        Ok(outcome)
    }

    /// Builds the tree with an injected evaluator scoring candidates; no
    /// evaluation runs are scheduled.
    pub fn build_with_evaluator(&self, evaluator: &mut dyn Evaluator) -> Result<TreeOutcome> {
        self.search(evaluator)
    }

    fn search(&self, evaluator: &mut dyn Evaluator) -> Result<TreeOutcome> {
        let config = self.config;
        let mut nodes = vec![ReasoningNode {
            id: 0,
            parent: None,
            depth: 0,
            tokens: self.prompt.clone(),
            score: None,
            selected: true,
        }];
        let mut levels = Vec::new();
        let mut runs = Vec::new();
        let mut frontier = vec![0usize];

        for level in 1..=config.depth {
            // Thought generation: one scheduled run per frontier state,
            // with `thoughts_per_state` sequences sharing its prompt.
            let mut candidates = Vec::new();
            for (ordinal, &state_id) in frontier.iter().enumerate() {
                let state = self.state_tokens(&nodes, state_id);
                let run_config = RunConfig {
                    kconfig: config.kconfig.clone(),
                    prefixes: vec![state; config.thoughts_per_state],
                    target_len: config.thought_len,
                    seed: component_seed(config.seed, SALT_THOUGHT, level, ordinal),
                    mode: config.mode,
                    ticks: config.ticks.clone(),
                };
                let out = run(self.models, &run_config)?;
                runs.push(ComponentRun {
                    component: Component::ThoughtGen,
                    level,
                    ordinal,
                    metrics: out.metrics,
                });
                for thought in out.responses {
                    let id = nodes.len();
                    nodes.push(ReasoningNode {
                        id,
                        parent: Some(state_id),
                        depth: level,
                        tokens: thought,
                        score: None,
                        selected: false,
                    });
                    candidates.push(id);
                }
            }

            let states: Vec<Vec<TokenId>> = candidates
                .iter()
                .map(|&id| self.state_tokens(&nodes, id))
                .collect();
            let scores = evaluator.evaluate_level(level, &states)?;
            if scores.len() != states.len() {
                return Err(Error::InvalidConfig(format!(
                    "evaluator returned {} values for {} candidates at level {level}",
                    scores.len(),
                    states.len()
                )));
            }
            for (&id, &score) in candidates.iter().zip(&scores) {
                nodes[id].score = Some(score);
            }

            // Stable top-`breadth`: order by value descending, creation
            // order breaking ties.
            let mut ranked = candidates.clone();
            ranked.sort_by(|&a, &b| {
                let (sa, sb) = (nodes[a].score.unwrap(), nodes[b].score.unwrap());
                sb.total_cmp(&sa).then(a.cmp(&b))
            });
            ranked.truncate(config.breadth);
            for &id in &ranked {
                nodes[id].selected = true;
            }
            levels.push(LevelRecord {
                level,
                candidates,
                scores,
                selected: ranked.clone(),
            });
            frontier = ranked;
        }

        // The final answer continues the best surviving state — the head
        // of the last selection, or the root for a depth-zero search.
        let final_node = frontier[0];
        let final_state = self.state_tokens(&nodes, final_node);
        let run_config = RunConfig {
            kconfig: config.kconfig.clone(),
            prefixes: vec![final_state],
            target_len: config.final_len(),
            seed: component_seed(config.seed, SALT_FINAL, config.depth, 0),
            mode: config.mode,
            ticks: config.ticks.clone(),
        };
        let out = run(self.models, &run_config)?;
        runs.push(ComponentRun {
            component: Component::Final,
            level: config.depth,
            ordinal: 0,
            metrics: out.metrics,
        });
        let final_tokens = out.responses.into_iter().next().expect("one sequence");

        Ok(TreeOutcome {
            tree: ReasoningTree {
                nodes,
                final_node,
                final_tokens,
            },
            levels,
            runs,
            warnings: Vec::new(),
        })
    }

    fn state_tokens(&self, nodes: &[ReasoningNode], id: usize) -> Vec<TokenId> {
        let mut path = Vec::new();
        let mut cursor = Some(id);
        while let Some(c) = cursor {
            path.push(c);
            cursor = nodes[c].parent;
        }
        let mut tokens = Vec::new();
        for &c in path.iter().rev() {
            tokens.extend(&nodes[c].tokens);
        }
        tokens
    }
}

fn component_rank(component: Component) -> u8 {
    match component {
        Component::ThoughtGen => 0,
        Component::Eval => 1,
        Component::Final => 2,
    }
}

/// The default evaluator: prompt each candidate through the template in
/// one scheduled run per level, decode `eval_len` tokens, parse a value.
struct ModelEvaluator<'a> {
    models: &'a ModelPair,
    config: &'a TreeConfig,
    runs: Vec<ComponentRun>,
    warnings: Vec<String>,
}

impl Evaluator for ModelEvaluator<'_> {
    fn evaluate_level(&mut self, level: usize, states: &[Vec<TokenId>]) -> Result<Vec<f64>> {
        let config = self.config;
        let run_config = RunConfig {
            kconfig: config.kconfig.clone(),
            prefixes: states
                .iter()
                .map(|s| config.eval_template.apply(s))
                .collect(),
            target_len: config.eval_len,
            seed: component_seed(config.seed, SALT_EVAL, level, 0),
            mode: config.mode,
            ticks: config.ticks.clone(),
        };
        let out = run(self.models, &run_config)?;
        self.runs.push(ComponentRun {
            component: Component::Eval,
            level,
            ordinal: 0,
            metrics: out.metrics,
        });
        let values = out
            .responses
            .iter()
            .enumerate()
            .map(|(i, response)| match config.value_parser.parse(response) {
                Some(v) => v,
                None => {
                    self.warnings.push(format!(
                        "level {level}: evaluation response for candidate {i} parsed no \
                         value; using default {}",
                        config.default_value
                    ));
                    config.default_value
                }
            })
            .collect();
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::Model;
    use std::sync::Arc;

    fn models(vocab: usize) -> ModelPair {
        let target = Arc::new(Model::lookup_random(vocab, 61, 1.0).unwrap());
        let draft = Arc::new(Model::smoothed_uniform(Arc::clone(&target), 0.4, 1.0).unwrap());
        ModelPair::new(target, draft).unwrap()
    }

    fn config(depth: usize, thoughts: usize, breadth: usize) -> TreeConfig {
        TreeConfig {
            depth,
            thoughts_per_state: thoughts,
            breadth,
            thought_len: 3,
            eval_len: 2,
            final_len: Some(4),
            eval_template: EvalTemplate {
                prefix: vec![TokenId(0)],
                suffix: vec![TokenId(1)],
            },
            value_parser: ValueParser::ScalarToken { min: 0, max: 5 },
            default_value: -1.0,
            kconfig: KConfig::new(vec![2, 1]).unwrap(),
            mode: SchedMode::VirtualTime,
            ticks: TickParams::default(),
            seed: 17,
        }
    }

    /// Scores a state by its last token id, negated so smaller tokens win.
    struct LastTokenEvaluator;

    impl Evaluator for LastTokenEvaluator {
        fn evaluate_level(&mut self, _level: usize, states: &[Vec<TokenId>]) -> Result<Vec<f64>> {
            Ok(states
                .iter()
                .map(|s| -f64::from(s.last().unwrap().0))
                .collect())
        }
    }

    #[test]
    fn tree_shape_follows_depth_breadth_and_fanout() {
        let models = models(6);
        let cfg = config(2, 3, 2);
        let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(2)]).unwrap();
        let outcome = builder.build().unwrap();

        // Level 1: one root state drafts 3 candidates, keep 2; level 2:
        // two states draft 3 each, keep 2 of 6.
        assert_eq!(outcome.levels.len(), 2);
        assert_eq!(outcome.levels[0].candidates.len(), 3);
        assert_eq!(outcome.levels[0].selected.len(), 2);
        assert_eq!(outcome.levels[1].candidates.len(), 6);
        assert_eq!(outcome.levels[1].selected.len(), 2);
        assert_eq!(outcome.tree.nodes.len(), 1 + 3 + 6);
        assert_eq!(outcome.tree.final_tokens.len(), 4);

        for node in &outcome.tree.nodes[1..] {
            assert_eq!(node.tokens.len(), 3);
            assert!(node.score.is_some());
        }
        assert_eq!(
            outcome.tree.final_node,
            outcome.levels.last().unwrap().selected[0]
        );
    }

    #[test]
    fn selection_keeps_every_candidate_when_breadth_exceeds_fanout() {
        let models = models(6);
        let cfg = config(1, 2, 5);
        let builder = TreeBuilder::new(&models, &cfg, vec![]).unwrap();
        let outcome = builder.build().unwrap();
        // min(b, candidates) = 2.
        assert_eq!(outcome.levels[0].selected.len(), 2);
    }

    #[test]
    fn builds_are_deterministic_in_the_seed() {
        let models = models(6);
        let cfg = config(2, 2, 2);
        let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(1)]).unwrap();
        let a = builder.build().unwrap();
        let b = builder.build().unwrap();
        assert_eq!(a, b);

        let mut other = cfg.clone();
        other.seed = 18;
        let c = TreeBuilder::new(&models, &other, vec![TokenId(1)])
            .unwrap()
            .build()
            .unwrap();
        assert_ne!(a.tree, c.tree);
    }

    #[test]
    fn threaded_and_virtual_builds_agree_exactly() {
        let models = models(6);
        let cfg = config(2, 2, 2);
        let virtual_outcome = TreeBuilder::new(&models, &cfg, vec![TokenId(3)])
            .unwrap()
            .build()
            .unwrap();
        let mut threaded_cfg = cfg.clone();
        threaded_cfg.mode = SchedMode::Threaded;
        let threaded_outcome = TreeBuilder::new(&models, &threaded_cfg, vec![TokenId(3)])
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(virtual_outcome.tree, threaded_outcome.tree);
        assert_eq!(virtual_outcome.levels, threaded_outcome.levels);
    }

    #[test]
    fn injected_evaluator_drives_selection_and_schedules_no_eval_runs() {
        let models = models(6);
        let cfg = config(2, 3, 1);
        let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(2)]).unwrap();
        let outcome = builder.build_with_evaluator(&mut LastTokenEvaluator).unwrap();

        assert!(outcome
            .runs
            .iter()
            .all(|r| r.component != Component::Eval));
        for record in &outcome.levels {
            // The survivor must be the candidate with the best score; ties
            // go to the earliest-created node.
            let best = record.selected[0];
            let best_score = outcome.tree.nodes[best].score.unwrap();
            for (&cand, &score) in record.candidates.iter().zip(&record.scores) {
                assert!(score <= best_score);
                if score == best_score {
                    assert!(best <= cand, "stable selection picked a later tie");
                }
            }
        }
    }

    #[test]
    fn selected_states_match_brute_force_subset_choice() {
        let models = models(7);
        for breadth in [1, 2] {
            let cfg = config(2, 3, breadth);
            let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(4)]).unwrap();
            let outcome = builder.build_with_evaluator(&mut LastTokenEvaluator).unwrap();
            for record in &outcome.levels {
                // Brute force: enumerate candidates in creation order and
                // pick the `breadth` best by (score desc, id asc).
                let mut expect: Vec<usize> = record.candidates.clone();
                expect.sort_by(|&a, &b| {
                    let sa = outcome.tree.nodes[a].score.unwrap();
                    let sb = outcome.tree.nodes[b].score.unwrap();
                    sb.total_cmp(&sa).then(a.cmp(&b))
                });
                expect.truncate(breadth.min(record.candidates.len()));
                assert_eq!(record.selected, expect, "breadth {breadth}");
            }
        }
    }

    #[test]
    fn unparseable_evaluations_fall_back_to_the_default_value() {
        let models = models(6);
        let mut cfg = config(1, 2, 1);
        // No token of this vocabulary reaches id 90: nothing parses.
        cfg.value_parser = ValueParser::ScalarToken { min: 90, max: 99 };
        cfg.default_value = 0.25;
        let builder = TreeBuilder::new(&models, &cfg, vec![]).unwrap();
        let outcome = builder.build().unwrap();
        assert_eq!(outcome.levels[0].scores, vec![0.25, 0.25]);
        assert_eq!(outcome.warnings.len(), 2);
        // All scores tie, so stable selection keeps the first candidate.
        assert_eq!(outcome.levels[0].selected[0], outcome.levels[0].candidates[0]);
    }

    #[test]
    fn depth_zero_generates_the_final_answer_from_the_prompt() {
        let models = models(6);
        let cfg = config(0, 2, 1);
        let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(5)]).unwrap();
        let outcome = builder.build().unwrap();
        assert_eq!(outcome.tree.nodes.len(), 1);
        assert_eq!(outcome.tree.final_node, 0);
        assert_eq!(outcome.tree.final_tokens.len(), 4);
        assert!(outcome.levels.is_empty());
        assert_eq!(outcome.runs.len(), 1);
        assert_eq!(outcome.runs[0].component, Component::Final);
    }

    #[test]
    fn component_runs_account_for_every_scheduled_run() {
        let models = models(6);
        let cfg = config(2, 2, 2);
        let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(0)]).unwrap();
        let outcome = builder.build().unwrap();
        let count = |c: Component| outcome.runs.iter().filter(|r| r.component == c).count();
        // Level 1 has one frontier state, level 2 has two: three thought
        // runs, one eval run per level, one final run.
        assert_eq!(count(Component::ThoughtGen), 3);
        assert_eq!(count(Component::Eval), 2);
        assert_eq!(count(Component::Final), 1);
        for run in &outcome.runs {
            assert!(run.metrics.rounds > 0);
            assert!(run.metrics.response_tokens > 0);
        }
    }

    #[test]
    fn state_tokens_concatenate_the_path_from_the_root() {
        let models = models(6);
        let cfg = config(2, 2, 1);
        let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(1), TokenId(2)]).unwrap();
        let outcome = builder.build().unwrap();
        let leaf = outcome.levels[1].selected[0];
        let state = outcome.tree.state_tokens(leaf);
        let parent = outcome.tree.nodes[leaf].parent.unwrap();
        assert_eq!(state.len(), 2 + 3 + 3);
        assert_eq!(&state[..2], &[TokenId(1), TokenId(2)]);
        let parent_state = outcome.tree.state_tokens(parent);
        assert_eq!(&state[..parent_state.len()], &parent_state[..]);
    }

    #[test]
    fn tree_dump_writes_one_json_object_per_node() {
        let models = models(6);
        let cfg = config(1, 2, 1);
        let builder = TreeBuilder::new(&models, &cfg, vec![TokenId(3)]).unwrap();
        let outcome = builder.build().unwrap();
        let mut buf = Vec::new();
        outcome.tree.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), outcome.tree.nodes.len());
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["id"], 0);
        assert!(first["parent"].is_null());
        let second: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second["parent"], 0);
        assert_eq!(second["depth"], 1);
    }

    #[test]
    fn scalar_and_classifier_parsers_read_the_first_match() {
        let scalar = ValueParser::ScalarToken { min: 2, max: 4 };
        assert_eq!(scalar.parse(&[TokenId(7), TokenId(3), TokenId(2)]), Some(3.0));
        assert_eq!(scalar.parse(&[TokenId(9)]), None);
        assert_eq!(scalar.parse(&[]), None);

        let classes = ValueParser::ClassifierMap(vec![
            (TokenId(0), 1.0),
            (TokenId(1), 0.0),
        ]);
        assert_eq!(classes.parse(&[TokenId(5), TokenId(1), TokenId(0)]), Some(0.0));
        assert_eq!(classes.parse(&[TokenId(5)]), None);
    }

    #[test]
    fn rejects_degenerate_configs() {
        let models = models(6);
        let mut cfg = config(1, 0, 1);
        assert!(TreeBuilder::new(&models, &cfg, vec![]).is_err());
        cfg = config(1, 2, 0);
        assert!(TreeBuilder::new(&models, &cfg, vec![]).is_err());
        cfg = config(1, 2, 1);
        cfg.value_parser = ValueParser::ScalarToken { min: 5, max: 2 };
        assert!(TreeBuilder::new(&models, &cfg, vec![]).is_err());
        cfg = config(40, 2, 1);
        cfg.thought_len = 20;
        assert!(
            TreeBuilder::new(&models, &cfg, vec![]).is_err(),
            "a 40-level search of 20-token thoughts cannot fit the context window"
        );
    }
}
