use std::collections::BTreeSet;

use nalgebra::Point2;
use proptest::prelude::*;

use super::*;
use crate::scene_graph::{Pose, Relation, SemanticAssertion, Source};

struct Home {
    graph: SceneGraph,
    shelf: NodeId,
    dining: NodeId,
    sofa: NodeId,
    cleaning_table: NodeId,
    laundry: NodeId,
    operator: NodeId,
}

/// Two rooms, five pieces of furniture, operator next to the robot.
fn home() -> Home {
    let mut g = SceneGraph::default();
    let living = g.add_room("living room", Pose::at(3.0, 2.5, 0.0), 0);
    let cleaning = g.add_room("cleaning room", Pose::at(9.0, 2.5, 0.0), 0);
    let shelf = g.add_furniture("shelf", Pose::at(1.0, 4.0, 1.0), living, 0).unwrap();
    let dining = g.add_furniture("dining table", Pose::at(3.25, 1.0, 0.75), living, 0).unwrap();
    let sofa = g.add_furniture("sofa", Pose::at(4.75, 4.0, 0.45), living, 0).unwrap();
    let cleaning_table = g.add_furniture("cleaning table", Pose::at(10.75, 4.0, 0.8), cleaning, 0).unwrap();
    let laundry = g.add_furniture("laundry machine", Pose::at(11.0, 1.0, 0.9), cleaning, 0).unwrap();
    let operator = g.add_human("operator", Pose::at(1.0, 1.0, 0.0), 0);
    g.add_robot("robot", Pose::at(1.0, 1.5, 0.0), 0);
    Home {
        graph: g,
        shelf,
        dining,
        sofa,
        cleaning_table,
        laundry,
        operator,
    }
}

fn planner() -> Planner {
    Planner::new(PriorTable::household_defaults(), PlannerConfig::default())
}

fn nodes(c: &[Candidate]) -> Vec<NodeId> {
    c.iter().map(|c| c.node).collect()
}

fn navigate_targets(plan: &Plan) -> Vec<NodeId> {
    plan.actions
        .iter()
        .filter_map(|a| match a {
            Action::Navigate { target } => Some(*target),
            _ => None,
        })
        .collect()
}

#[test]
fn priors_order_search_without_belief() {
    let h = home();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let c = planner().candidate_locations(&task, &h.graph, 0);
    assert_eq!(nodes(&c), vec![h.shelf, h.dining, h.sofa, h.cleaning_table, h.laundry]);
    assert_eq!(c[0].score, 0.7);
    assert_eq!(c[1].score, 0.4);
    assert!(c[2..].iter().all(|c| c.score == 0.05 && !c.believed));
}

#[test]
fn confident_belief_is_sole_candidate() {
    let mut h = home();
    h.graph
        .apply_assertion(&SemanticAssertion::from_source("apple", Relation::On, "cleaning table", Source::Verbal, 0))
        .unwrap();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let c = planner().candidate_locations(&task, &h.graph, 0);
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].node, h.cleaning_table);
    assert!(c[0].believed);
    assert!((c[0].score - 0.8).abs() < 1e-12);
}

#[test]
fn weak_belief_falls_back_to_priors() {
    let mut h = home();
    h.graph
        .apply_assertion(&SemanticAssertion::from_source("apple", Relation::On, "cleaning table", Source::Prior, 0))
        .unwrap();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let c = planner().candidate_locations(&task, &h.graph, 0);
    assert_eq!(c[0].node, h.shelf);
}

#[test]
fn unknown_object_visits_all_furniture_in_id_order() {
    let h = home();
    let task = parse_command("bring a cup", 1, 0).unwrap();
    let empty = Planner::new(PriorTable::default(), PlannerConfig::default());
    let c = empty.candidate_locations(&task, &h.graph, 0);
    assert_eq!(nodes(&c), vec![h.shelf, h.dining, h.sofa, h.cleaning_table, h.laundry]);
    assert!(c.iter().all(|c| c.score == 0.05));
}

#[test]
fn empty_graph_has_no_candidates() {
    let task = parse_command("bring a cup", 1, 0).unwrap();
    assert!(planner().candidate_locations(&task, &SceneGraph::default(), 0).is_empty());
}

#[test]
fn room_hint_expands_in_prior_order() {
    let h = home();
    let task = parse_command("bring a teddy bear from the living room", 1, 0).unwrap();
    let c = planner().candidate_locations(&task, &h.graph, 0);
    assert_eq!(nodes(&c), vec![h.sofa, h.dining, h.shelf, h.cleaning_table, h.laundry]);
    assert!(c[..3].iter().all(|c| c.score == 1.0));
}

#[test]
fn initial_search_plan_starts_at_shelf() {
    let h = home();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let plan = planner().plan(&task, &h.graph, 0, &BTreeSet::new()).unwrap();
    assert_eq!(plan.first_navigation_target(), Some(h.shelf));
    assert_eq!(plan.actions[1], Action::Perceive);
    assert_eq!(plan.revision, 0);
    assert_eq!(plan.actions.last(), Some(&Action::Handover { human: h.operator }));
    assert!(!plan.actions.iter().any(|a| matches!(a, Action::Pick { .. })));
}

#[test]
fn known_location_plan_is_direct() {
    let mut h = home();
    h.graph
        .apply_assertion(&SemanticAssertion::from_source("apple", Relation::On, "cleaning table", Source::Verbal, 0))
        .unwrap();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let plan = planner().plan(&task, &h.graph, 0, &BTreeSet::new()).unwrap();
    assert_eq!(
        plan.actions,
        vec![
            Action::Navigate { target: h.cleaning_table },
            Action::Perceive,
            Action::Pick { object: "apple".into() },
            Action::Navigate { target: h.operator },
            Action::Handover { human: h.operator },
        ]
    );
}

#[test]
fn human_on_route_is_queried_before_first_perceive() {
    let mut h = home();
    // Robot (1, 1.5) → shelf (1, 4): a bystander at (1.8, 2.7) is 0.8 m off the segment.
    let bystander = h.graph.add_human("alice", Pose::at(1.8, 2.7, 0.0), 0);
    let far = h.graph.add_human("bob", Pose::at(8.0, 1.0, 0.0), 0);

    // Sampling oracle for point-to-polyline distance.
    let route = [Point2::new(1.0, 1.5), Point2::new(1.0, 4.0), Point2::new(3.25, 1.0), Point2::new(4.75, 4.0), Point2::new(10.75, 4.0), Point2::new(11.0, 1.0)];
    let sampled = |p: Point2<f64>| {
        route
            .windows(2)
            .flat_map(|w| (0..=10_000).map(move |i| w[0] + (w[1] - w[0]) * (i as f64 / 10_000.0)))
            .map(|q| nalgebra::distance(&p, &q))
            .fold(f64::INFINITY, f64::min)
    };
    for p in [Point2::new(1.8, 2.7), Point2::new(8.0, 1.0)] {
        assert!((sampled(p) - polyline_distance(&p, &route)).abs() < 1e-3);
    }
    assert!(sampled(Point2::new(1.8, 2.7)) <= 0.8 + 1e-9);
    assert!(sampled(Point2::new(8.0, 1.0)) > 1.5);
    assert!((segment_distance(&Point2::new(1.8, 2.7), &route[0], &route[1]) - 0.8).abs() < 1e-12);

    let task = parse_command("bring an apple", 1, 0).unwrap();
    let plan = planner().plan(&task, &h.graph, 0, &BTreeSet::new()).unwrap();
    let query = plan.actions.iter().position(|a| *a == Action::QueryHuman { human: bystander }).unwrap();
    let perceive = plan.actions.iter().position(|a| *a == Action::Perceive).unwrap();
    assert!(query < perceive);
    assert_eq!(plan.actions[0], Action::Navigate { target: bystander });
    assert!(!plan.actions.contains(&Action::QueryHuman { human: far }));

    // Already asked: not asked again.
    let asked = BTreeSet::from([bystander]);
    let plan = planner().plan(&task, &h.graph, 0, &asked).unwrap();
    assert_eq!(plan.first_navigation_target(), Some(h.shelf));
}

#[test]
fn replan_bumps_revision_and_retargets() {
    let mut h = home();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let p = planner();
    let first = p.plan(&task, &h.graph, 0, &BTreeSet::new()).unwrap();
    assert_eq!(first.first_navigation_target(), Some(h.shelf));
    h.graph
        .apply_assertion(&SemanticAssertion::from_source("apple", Relation::On, "cleaning table", Source::Verbal, 20))
        .unwrap();
    let second = p.replan(&task, &h.graph, &first, 20, &BTreeSet::new()).unwrap();
    assert_eq!(second.revision, 1);
    assert_eq!(second.first_navigation_target(), Some(h.cleaning_table));
    assert_eq!(second.created_at, 20);
}

#[test]
fn held_object_reduces_to_delivery() {
    let mut h = home();
    h.graph
        .apply_assertion(&SemanticAssertion::new("apple", Relation::HeldBy, "robot", 1.0, Source::Geometric, 10))
        .unwrap();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let p = planner();
    let old = Plan {
        task: 1,
        actions: vec![Action::Perceive, Action::Handover { human: h.operator }],
        cursor: 0,
        revision: 3,
        created_at: 0,
    };
    let plan = p.replan(&task, &h.graph, &old, 30, &BTreeSet::new()).unwrap();
    assert_eq!(
        plan.actions,
        vec![Action::Navigate { target: h.operator }, Action::Handover { human: h.operator }]
    );
    assert_eq!(plan.revision, 4);
}

#[test]
fn planning_errors() {
    let mut g = SceneGraph::default();
    let task = parse_command("bring an apple", 1, 0).unwrap();
    let p = planner();
    assert_eq!(p.plan(&task, &g, 0, &BTreeSet::new()), Err(PlanError::NoRobot));
    g.add_robot("robot", Pose::at(0.0, 0.0, 0.0), 0);
    assert!(matches!(p.plan(&task, &g, 0, &BTreeSet::new()), Err(PlanError::NoOperator(_))));
    g.add_human("operator", Pose::at(0.0, 0.0, 0.0), 0);
    assert_eq!(p.plan(&task, &g, 0, &BTreeSet::new()), Err(PlanError::NoCandidates));
    let mut done = task.clone();
    done.status = TaskStatus::Succeeded;
    assert_eq!(p.plan(&done, &home().graph, 0, &BTreeSet::new()), Err(PlanError::TaskNotActive(1)));
}

#[test]
fn place_destination_ends_with_place() {
    let h = home();
    let mut task = parse_command("bring an apple", 1, 0).unwrap();
    task.destination = Destination::Node(h.sofa);
    let plan = planner().plan(&task, &h.graph, 0, &BTreeSet::new()).unwrap();
    assert_eq!(plan.actions.last(), Some(&Action::Place { target: h.sofa }));
}

#[test]
fn relevance_examples() {
    let mut h = home();
    let apple_task = parse_command("bring an apple", 1, 0).unwrap();
    let delta = h
        .graph
        .apply_assertion(&SemanticAssertion::from_source("apple", Relation::On, "cleaning table", Source::Verbal, 5))
        .unwrap();
    assert!(is_relevant(&delta, &apple_task));

    let delta = h
        .graph
        .apply_assertion(&SemanticAssertion::from_source("orange", Relation::On, "cleaning table", Source::Written, 6))
        .unwrap();
    assert!(!is_relevant(&delta, &apple_task));
    assert!(!is_relevant(&GraphDelta::empty(7), &apple_task));

    // Re-observation at the same landmark replaces the edge but is not news.
    let delta = h
        .graph
        .apply_assertion(&SemanticAssertion::new("apple", Relation::On, "cleaning table", 0.855, Source::Geometric, 300))
        .unwrap();
    assert_eq!(delta.superseded_edges.len(), 1);
    assert!(!is_relevant(&delta, &apple_task));

    // Moving it somewhere else is.
    let delta = h
        .graph
        .apply_assertion(&SemanticAssertion::new("apple", Relation::On, "laundry machine", 0.9, Source::Geometric, 400))
        .unwrap();
    assert!(is_relevant(&delta, &apple_task));
    let _ = (h.laundry, h.dining);

    // Near edges never are.
    let delta = h
        .graph
        .apply_assertion(&SemanticAssertion::new("apple", Relation::Near, "sofa", 0.9, Source::Geometric, 401))
        .unwrap();
    assert!(!is_relevant(&delta, &apple_task));
}

fn arb_assertion() -> impl Strategy<Value = SemanticAssertion> {
    (
        prop::sample::select(vec!["apple", "orange", "teddy bear"]),
        prop::sample::select(vec![Relation::On, Relation::At, Relation::Near]),
        prop::sample::select(vec!["shelf", "dining table", "sofa", "cleaning table", "laundry machine", "living room"]),
        0.0f64..=1.0,
        prop::sample::select(Source::ALL.to_vec()),
        0u64..3000,
    )
        .prop_map(|(s, r, o, c, src, t)| SemanticAssertion::new(s, r, o, c, src, t))
}

proptest! {
    #[test]
    fn plans_are_well_formed_and_follow_beliefs(
        assertions in prop::collection::vec(arb_assertion(), 0..12),
        object in prop::sample::select(vec!["apple", "orange", "teddy bear", "cup"]),
        now in 0u64..4000,
    ) {
        let mut h = home();
        for a in &assertions {
            let _ = h.graph.apply_assertion(a);
        }
        let task = parse_command(&format!("bring the {object}"), 1, 0).unwrap();
        let plan = planner().plan(&task, &h.graph, now, &BTreeSet::new()).unwrap();
        prop_assert!(plan.actions.last().unwrap().is_terminal());
        for target in navigate_targets(&plan) {
            prop_assert!(h.graph.node(target).unwrap().pose.is_some());
        }
        if let Some(chain) = h.graph.locate(object, now) {
            let support_kind = h.graph.node(chain.support).unwrap().kind;
            if chain.confidence >= 0.5 && support_kind == EntityKind::Furniture {
                prop_assert_eq!(plan.first_navigation_target(), Some(chain.support));
            }
        }
        // Furniture appears at most once as a search stop.
        let mut seen = BTreeSet::new();
        for t in navigate_targets(&plan) {
            if h.graph.node(t).unwrap().kind == EntityKind::Furniture {
                prop_assert!(seen.insert(t));
            }
        }
    }
}
