use std::collections::BTreeMap;

use avil_core::demos::{scripted_expert, ExpertPlan};
use avil_core::eval::baseline::{WRIST_DELTA, WRIST_JOINT};
use avil_core::eval::matrix::MarginalRow;
use avil_core::eval::*;
use avil_core::net::{ActionChunk, NetError};
use avil_core::sim::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Test policy: records what it was shown and commands a fixed offset from
/// the newest joints in the window.
struct Stub {
    k: usize,
    delta: f64,
    seen: Vec<Vec<Joints>>,
}

impl Policy for Stub {
    fn k(&self) -> usize {
        self.k
    }

    fn act(&mut self, _frame: &Image, history: &[Joints]) -> Result<Prediction, NetError> {
        self.seen.push(history.to_vec());
        let mut q = *history.last().unwrap();
        q[0] += self.delta;
        let mut far = q;
        far[1] += 1.0;
        Ok(Prediction {
            chunk: ActionChunk { joints: vec![q, far] },
            centroid: None,
        })
    }
}

/// Replays a fixed command list; chunk element 0 is the next command.
struct Replay {
    commands: Vec<Joints>,
    next: usize,
}

impl Policy for Replay {
    fn k(&self) -> usize {
        4
    }

    fn act(&mut self, _frame: &Image, _history: &[Joints]) -> Result<Prediction, NetError> {
        let i = self.next.min(self.commands.len() - 1);
        self.next += 1;
        let j = (i + 1).min(self.commands.len() - 1);
        Ok(Prediction {
            chunk: ActionChunk {
                joints: vec![self.commands[i], self.commands[j]],
            },
            centroid: None,
        })
    }
}

struct Failing;

impl Policy for Failing {
    fn k(&self) -> usize {
        2
    }

    fn act(&mut self, _frame: &Image, _history: &[Joints]) -> Result<Prediction, NetError> {
        Err(NetError::Input("boom".into()))
    }
}

fn world(bowl: BowlKind, food: FoodKind, position: Position, seed: u64) -> WorldState {
    make_scene(&SceneConfig {
        bowl,
        food,
        position,
        distractors: false,
        seed,
    })
    .unwrap()
}

#[test]
fn mpc_runs_first_chunk_element_and_slides_the_window() {
    let mut w = world(BowlKind::PM, FoodKind::Granular, Position::P1, 0);
    let q0 = w.arm.joints;
    let mut stub = Stub {
        k: 4,
        delta: -0.01,
        seen: Vec::new(),
    };
    let trace = mpc_execute(&mut stub, &mut w, Camera::new(32, 32).unwrap(), 12);
    assert_eq!(trace.termination, Termination::MaxSteps);
    assert_eq!(trace.step_count, 12);
    assert_eq!(stub.seen.len(), 12);
    assert_eq!(stub.seen[0], vec![q0; 4]);
    for (i, step) in trace.steps.iter().enumerate() {
        assert_eq!(step.commanded, step.chunk.joints[0]);
        assert_eq!(step.history, stub.seen[i]);
    }
    // after step i the newest entry is the joints reached by command i
    for i in 1..12 {
        let expect_new = trace.steps[i - 1].commanded;
        assert_eq!(*stub.seen[i].last().unwrap(), expect_new);
        assert_eq!(stub.seen[i][..3], stub.seen[i - 1][1..]);
    }
    assert_eq!(w.arm.joints, trace.steps[11].commanded);
    assert_eq!(w.step_count, 12);
}

#[test]
fn mpc_reproduces_expert_when_fed_its_commands() {
    let mut w = world(BowlKind::TG, FoodKind::Granular, Position::P1, 4);
    let cmds = scripted_expert(&w, &ExpertPlan::default(), 4).unwrap();
    let mut policy = Replay { commands: cmds, next: 0 };
    let trace = mpc_execute(&mut policy, &mut w, Camera::new(32, 32).unwrap(), 200);
    assert_eq!(trace.termination, Termination::LiftComplete);
    assert_eq!(trace.score.value, 1.0);
}

#[test]
fn mpc_stops_on_policy_error() {
    let mut w = world(BowlKind::PS, FoodKind::Liquid, Position::P3, 1);
    let before = w.state_hash();
    let trace = mpc_execute(&mut Failing, &mut w, Camera::new(32, 32).unwrap(), 10);
    assert!(matches!(trace.termination, Termination::PolicyError(_)));
    assert_eq!(trace.step_count, 0);
    assert_eq!(w.state_hash(), before);
    assert_eq!(trace.score.value, 0.0);
}

#[test]
fn mpc_stops_on_collision() {
    let mut w = world(BowlKind::PL, FoodKind::Granular, Position::P1, 2);
    // drive the shoulder down until the arm hits the table or bowl
    let mut stub = Stub {
        k: 3,
        delta: 0.1,
        seen: Vec::new(),
    };
    let trace = mpc_execute(&mut stub, &mut w, Camera::new(32, 32).unwrap(), 100);
    assert_eq!(trace.termination, Termination::Collision);
    assert!(w.collision_flag);
    assert_eq!(trace.score.value, 0.0);
    assert!(trace.step_count < 100);
}

#[test]
fn baseline_rotates_the_wrist_by_the_fixed_angle() {
    for bowl in BowlKind::ALL {
        for pos in Position::ALL {
            let w = world(bowl, FoodKind::SemiSolid, pos, 0);
            let plan = baseline_plan(&w).unwrap();
            let before = *plan.approach.last().unwrap();
            let after = *plan.rotation.last().unwrap();
            assert_eq!(WRIST_DELTA, -0.6);
            assert!((after[WRIST_JOINT] - before[WRIST_JOINT] - WRIST_DELTA).abs() < 1e-12);
            for j in (0..6).filter(|&j| j != WRIST_JOINT) {
                assert_eq!(after[j], before[j]);
            }
            for q in plan.commands() {
                assert!(arm::within_limits(q));
            }
        }
    }
}

#[test]
fn baseline_is_open_loop() {
    let mut a = world(BowlKind::TG, FoodKind::Granular, Position::P2, 7);
    let mut b = world(BowlKind::TG, FoodKind::Granular, Position::P2, 7);
    let ta = baseline_controller(&mut a, 200);
    let tb = baseline_controller(&mut b, 200);
    assert_eq!(ta, tb);
    assert!(ta.steps.iter().all(|s| s.chunk.joints.len() == 1));
    let short = baseline_controller(&mut world(BowlKind::TG, FoodKind::Granular, Position::P1, 7), 5);
    assert_eq!(short.step_count, 5);
    assert_eq!(short.termination, Termination::MaxSteps);
}

#[test]
fn baseline_spills_liquid() {
    let mut total = 0.0;
    for trial in 0..15 {
        let key = CellKey {
            bowl: BowlKind::ALL[trial % 4],
            food: FoodKind::Liquid,
            position: Position::ALL[trial % 3],
            scene: Scene::Plain,
            trial,
        };
        total += run_cell(Method::Baseline, None, &key, &MatrixConfig::default()).score;
    }
    assert!(total / 15.0 <= 0.1, "baseline liquid mean {}", total / 15.0);
}

#[test]
fn baseline_clips_the_rim_at_p2() {
    let mut hits = 0;
    let mut n = 0;
    for bowl in BowlKind::ALL {
        for trial in 0..5 {
            let key = CellKey {
                bowl,
                food: FoodKind::Granular,
                position: Position::P2,
                scene: Scene::Plain,
                trial,
            };
            let rec = run_cell(Method::Baseline, None, &key, &MatrixConfig::default());
            hits += usize::from(rec.collision);
            n += 1;
        }
    }
    assert!(hits * 10 >= n * 8, "{hits}/{n} collisions");
}

#[test]
fn matrix_has_360_cells_per_method() {
    let keys = CellKey::all(5);
    assert_eq!(keys.len(), 360);
    let mut sorted = keys.clone();
    sorted.dedup();
    assert_eq!(sorted.len(), 360);
    let plain = CellKey {
        bowl: BowlKind::PS,
        food: FoodKind::Liquid,
        position: Position::P2,
        scene: Scene::Plain,
        trial: 3,
    };
    let cluttered = CellKey {
        scene: Scene::Distractors,
        ..plain
    };
    assert_eq!(plain.seed(0), cluttered.seed(0));
    assert_ne!(plain.seed(0), CellKey { trial: 4, ..plain }.seed(0));
    assert!(!plain.scene_config(0).distractors && cluttered.scene_config(0).distractors);
}

fn synthetic_cells(seed: u64) -> Vec<CellRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for method in Method::ALL {
        for key in CellKey::all(5) {
            let score = [0.0, 0.7, 1.0][rng.gen_range(0..3)];
            out.push(CellRecord {
                method,
                bowl: key.bowl,
                food: key.food,
                position: key.position,
                scene: key.scene,
                trial: key.trial,
                seed: key.seed(0),
                score,
                scooped: if score > 0.0 { 5 } else { 0 },
                spilled: (score == 0.7) as usize,
                collision: false,
                steps: rng.gen_range(1..200),
                termination: "lift_complete".into(),
            });
        }
    }
    out
}

#[test]
fn report_files_and_row_count() {
    let cells = synthetic_cells(1);
    let dir = tempfile::tempdir().unwrap();
    let result = ExperimentResult {
        config: MatrixConfig::default(),
        cells: cells.clone(),
    };
    let summary = write_report(&result, dir.path()).unwrap();
    let csv = std::fs::read(dir.path().join("cells.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 721);
    assert_eq!(read_cells_csv(&csv).unwrap(), cells);
    assert_eq!(summary.cells_per_method, 360);
    let md = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
    assert!(md.contains("| TG |") && md.contains("| liquid |") && md.contains("| P3 |"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["per_bowl"].as_array().unwrap().len(), 4);
}

/// Independent recomputation of the marginals from raw rows.
fn oracle_means(cells: &[CellRecord], factor: impl Fn(&CellRecord) -> String) -> BTreeMap<(String, Method), f64> {
    let mut acc: BTreeMap<(String, Method), (f64, usize)> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.scene == Scene::Plain) {
        let e = acc.entry((factor(c), c.method)).or_default();
        e.0 += c.score;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn check_rows(rows: &[MarginalRow], oracle: &BTreeMap<(String, Method), f64>) {
    for r in rows {
        let a = oracle[&(r.key.clone(), Method::Avil)];
        let b = oracle[&(r.key.clone(), Method::Baseline)];
        assert!((r.avil - a).abs() < 1e-12 && (r.baseline - b).abs() < 1e-12, "{r:?}");
        assert_eq!(r.ratio.is_some(), b > 0.0);
        if let Some(q) = r.ratio {
            assert!((q - a / b).abs() < 1e-12);
        }
    }
}

#[test]
fn summary_matches_recomputation() {
    for seed in 0..5 {
        let cells = synthetic_cells(seed);
        let s = summarize(&cells);
        check_rows(&s.per_bowl, &oracle_means(&cells, |c| c.bowl.to_string()));
        check_rows(&s.per_food, &oracle_means(&cells, |c| c.food.to_string()));
        check_rows(&s.per_position, &oracle_means(&cells, |c| c.position.to_string()));
        check_rows(std::slice::from_ref(&s.overall), &oracle_means(&cells, |_| "all".into()));
        assert_eq!(s.per_bowl[0].trials, 3 * 3 * 5);
        assert_eq!(s.per_food[0].trials, 4 * 3 * 5);
        for row in &s.scene_comparison {
            let pick = |scene| {
                let v: Vec<f64> = cells
                    .iter()
                    .filter(|c| {
                        c.method == Method::Avil
                            && c.bowl == BowlKind::TG
                            && c.position == Position::P1
                            && c.food == row.food
                            && c.scene == scene
                    })
                    .map(|c| c.score)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            assert!((row.scene1 - pick(Scene::Plain)).abs() < 1e-12);
            assert!((row.scene2 - pick(Scene::Distractors)).abs() < 1e-12);
            assert_eq!(row.trials, 5);
        }
    }
}

#[test]
fn zero_baseline_has_no_ratio() {
    let mut cells = synthetic_cells(3);
    for c in cells.iter_mut().filter(|c| c.method == Method::Baseline && c.food == FoodKind::Liquid) {
        c.score = 0.0;
    }
    let s = summarize(&cells);
    let liquid = s.per_food.iter().find(|r| r.key == "liquid").unwrap();
    assert_eq!(liquid.ratio, None);
    assert!(summary_markdown(&s).contains("n/a"));
}

#[test]
fn names_parse_back() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert_eq!("scene2".parse::<Scene>().unwrap(), Scene::Distractors);
    assert!("scene3".parse::<Scene>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn window_always_holds_k_entries(k in 1usize..7, steps in 1usize..15, delta in -0.05f64..0.05) {
        let mut w = world(BowlKind::PM, FoodKind::Granular, Position::P2, 0);
        let mut stub = Stub { k, delta, seen: Vec::new() };
        let trace = mpc_execute(&mut stub, &mut w, Camera::new(32, 32).unwrap(), steps);
        prop_assert_eq!(stub.seen.len(), trace.step_count);
        for h in &stub.seen {
            prop_assert_eq!(h.len(), k);
        }
    }
}
