use proptest::prelude::*;
use riskmap::encoder::RiskHeads;
use riskmap::geometry::Vec2;
use riskmap::kinematics::{states_from_positions, MotionState, TrajectorySample};
use riskmap::metrics::{
    ade, collides, collision_rate, fde_lat_lon, jerk, EvalReport, MetricRow, ScenarioRow, REPORT_COLUMNS,
};
use riskmap::planner::{plan, Models, PlanConfig};
use riskmap::predictor::PredictorModel;
use riskmap::scenario::{generate_scenarios, AgentState, AgentTrack, ScenarioKind, TrajPoint};

fn points() -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Vec2::new(x, y)), 30)
}

fn straight(start: Vec2, speed: f64, dt: f64) -> TrajectorySample {
    let begin = MotionState {
        pos: start,
        heading: 0.0,
        speed,
        accel: 0.0,
    };
    let positions = (1..=30)
        .map(|k| start + Vec2::new(speed * k as f64 * dt, 0.0))
        .collect::<Vec<_>>();
    TrajectorySample {
        states: states_from_positions(&begin, &positions, dt),
        target_speed: speed,
        lateral_offset: 0.0,
    }
}

#[test]
fn jerk_closed_forms() {
    assert!((jerk(&[0.0, 0.0, 1.0, 1.0], 1.0).unwrap() - 1.0).abs() < 1e-12);
    let linear: Vec<f64> = (0..30).map(|k| 3.0 + 0.7 * k as f64 * 0.1).collect();
    assert!(jerk(&linear, 0.1).unwrap().abs() < 1e-9);
    assert!(jerk(&[1.0, 2.0, 3.0], 0.1).is_err());
}

#[test]
fn jerk_of_constant_acceleration_plan_vanishes() {
    let dt = 0.1;
    let (v0, a) = (4.0, 1.5);
    let start = MotionState {
        pos: Vec2::ZERO,
        heading: 0.3,
        speed: v0,
        accel: a,
    };
    let dir = Vec2::from_angle(0.3);
    let positions: Vec<Vec2> = (1..=30)
        .map(|k| {
            let t = k as f64 * dt;
            dir * (v0 * t + 0.5 * a * t * t)
        })
        .collect();
    let states = states_from_positions(&start, &positions, dt);
    let speeds: Vec<f64> = states.iter().map(|s| s.speed).collect();
    assert!(jerk(&speeds, dt).unwrap() < 1e-9);
}

#[test]
fn parked_agent_on_the_path_is_a_collision() {
    let mut s = generate_scenarios(ScenarioKind::Straight, 1, 40).unwrap().remove(0);
    s.map.obstacles.clear();
    s.agents.clear();
    let ego = s.ego_motion();
    let along = Vec2::from_angle(ego.heading);
    let spot = ego.pos + along * 20.0;
    let parked = AgentState {
        x: spot.x,
        y: spot.y,
        heading: ego.heading,
        speed: 0.0,
        length: 4.5,
        width: 1.9,
    };
    s.agents.push(AgentTrack {
        id: 1,
        history: vec![parked; 15],
        future: vec![TrajPoint::from([spot.x, spot.y, ego.heading, 0.0]); 30],
    });
    let begin = MotionState { accel: 0.0, ..ego };
    let positions: Vec<Vec2> = (1..=30).map(|k| ego.pos + along * (10.0 * k as f64 * s.dt)).collect();
    let drive = TrajectorySample {
        states: states_from_positions(&begin, &positions, s.dt),
        target_speed: 10.0,
        lateral_offset: 0.0,
    };
    // the front reaches the agent only after 1 s
    assert!(!collides(&drive, &s, 1.0));
    assert!(collides(&drive, &s, 3.0));
    let rates: Vec<f64> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&h| collision_rate(std::slice::from_ref(&drive), std::slice::from_ref(&s), h).unwrap())
        .collect();
    assert_eq!(rates, vec![0.0, 1.0, 1.0]);
}

#[test]
fn empty_scenes_never_collide() {
    let mut s = generate_scenarios(ScenarioKind::Straight, 1, 41).unwrap().remove(0);
    s.map.obstacles.clear();
    s.agents.clear();
    let drive = straight(s.ego_motion().pos, 10.0, s.dt);
    assert_eq!(collision_rate(&[drive], &[s], 3.0).unwrap(), 0.0);
    assert_eq!(collision_rate(&[], &[], 3.0).unwrap(), 0.0);
}

fn planned_rows() -> (Vec<TrajectorySample>, Vec<riskmap::scenario::Scenario>) {
    let models = Models {
        predictor: PredictorModel::new(3, 30, 0),
        heads: RiskHeads::new(true, 30, 0),
    };
    let config = PlanConfig {
        count: 100,
        ..PlanConfig::default()
    };
    let mut plans = Vec::new();
    let mut scenes = Vec::new();
    for kind in ScenarioKind::ALL {
        for s in generate_scenarios(kind, 4, 42).unwrap() {
            let out = plan(&s, &models, &config).unwrap();
            plans.push(out.trajectories[out.selected].clone());
            scenes.push(s);
        }
    }
    (plans, scenes)
}

#[test]
fn collision_rate_is_monotone_in_horizon_and_report_is_consistent() {
    let (plans, scenes) = planned_rows();
    let rates: Vec<f64> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&h| collision_rate(&plans, &scenes, h).unwrap())
        .collect();
    assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "{rates:?}");

    let rows: Vec<ScenarioRow> = plans
        .iter()
        .zip(&scenes)
        .enumerate()
        .map(|(i, (p, s))| ScenarioRow {
            scenario: format!("scene_{i}"),
            metrics: MetricRow::evaluate(p, s).unwrap(),
        })
        .collect();
    for r in &rows {
        let m = r.metrics;
        assert!(m.values().iter().all(|v| *v >= 0.0 && v.is_finite()));
        assert!(m.col_1s <= m.col_2s && m.col_2s <= m.col_3s);
    }
    let report = EvalReport::new(100, rows.clone());
    let n = rows.len() as f64;
    let mean_ade = rows.iter().map(|r| r.metrics.ade).sum::<f64>() / n;
    assert!((report.aggregate.ade - mean_ade).abs() < 1e-12);
    assert!((report.aggregate.col_3s - rates[2]).abs() < 1e-12);

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], format!("scenario,{}", REPORT_COLUMNS.join(",")));
    assert_eq!(lines.len(), rows.len() + 2);
    assert!(lines.last().unwrap().starts_with("mean,"));
    let parsed: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(parsed, report);
}

proptest! {
    #[test]
    fn ade_is_symmetric(a in points(), b in points()) {
        prop_assert_eq!(ade(&a, &b).unwrap(), ade(&b, &a).unwrap());
    }

    #[test]
    fn fde_components_recompose(a in points(), b in points(), heading in -3.2..3.2f64) {
        let (lat, lon) = fde_lat_lon(&a, &b, heading).unwrap();
        let d = a[29].dist(b[29]);
        prop_assert!((lat * lat + lon * lon - d * d).abs() <= 1e-9 * d.max(1.0).powi(2));
    }
}
