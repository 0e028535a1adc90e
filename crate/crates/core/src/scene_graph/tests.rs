use super::*;
use proptest::prelude::*;

const HALF_LIFE: f64 = 6000.0;

/// Independent route to the decay: exp(-Δt·ln2/H).
fn decay_oracle(confidence: f64, asserted_at: Tick, now: Tick) -> f64 {
    let age = now as f64 - asserted_at as f64;
    confidence * (-age * std::f64::consts::LN_2 / HALF_LIFE).exp()
}

/// living room + cleaning room, shelf and cleaning table.
fn household() -> (SceneGraph, NodeId, NodeId, NodeId) {
    let mut g = SceneGraph::default();
    let living = g.add_room("living room", Pose::at(3.0, 2.5, 0.0), 0);
    let cleaning = g.add_room("cleaning room", Pose::at(9.0, 2.5, 0.0), 0);
    let shelf = g.add_furniture("shelf", Pose::at(1.0, 4.0, 1.0), living, 0).unwrap();
    let table = g
        .add_furniture("cleaning table", Pose::at(10.75, 4.0, 0.8), cleaning, 0)
        .unwrap();
    (g, cleaning, shelf, table)
}

fn on(subject: &str, object: &str, confidence: f64, source: Source, t: Tick) -> SemanticAssertion {
    SemanticAssertion::new(subject, Relation::On, object, confidence, source, t)
}

#[test]
fn grounds_by_normalized_label() {
    let (mut g, _, _, table) = household();
    assert_eq!(
        g.ground_label("the Cleaning Table", None, 0).unwrap(),
        Grounding::Existing(table)
    );
}

#[test]
fn grounding_unknown_object_creates_provisional_node() {
    let mut g = SceneGraph::default();
    let grounding = g.ground_label("apple", None, 3).unwrap();
    let Grounding::Provisional(id) = grounding else {
        panic!("expected provisional node, got {grounding:?}");
    };
    let node = g.node(id).unwrap();
    assert_eq!(node.kind, EntityKind::Object);
    assert!(node.pose.is_none());
    assert_eq!(node.created_at, 3);
}

#[test]
fn grounding_unknown_place_returns_unresolved() {
    let (mut g, _, _, _) = household();
    g.lexicon.add_place("laundry machine");
    let before = g.nodes().count();
    assert_eq!(g.ground_label("laundry machine", None, 0).unwrap(), Grounding::Unresolved);
    assert_eq!(g.nodes().count(), before);
    assert_eq!(g.ground_label("  the ", None, 0), Err(GraphError::EmptyLabel));
}

#[test]
fn grounding_prefers_nearest_match() {
    let mut g = SceneGraph::default();
    let room = g.add_room("kitchen", Pose::at(0.0, 0.0, 0.0), 0);
    let a = g.add_furniture("table", Pose::at(0.0, 0.0, 0.7), room, 0).unwrap();
    let b = g.add_furniture("table", Pose::at(5.0, 0.0, 0.7), room, 0).unwrap();
    let reference = Point3::new(4.0, 0.0, 0.7);

    // Brute force: distance to every label-matching node, min by (distance, id).
    let oracle = [a, b]
        .into_iter()
        .map(|id| (nalgebra::distance(&g.node(id).unwrap().pose.unwrap().position, &reference), id))
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
        .unwrap()
        .1;
    assert_eq!(oracle, b);
    assert_eq!(g.ground_label("table", Some(&reference), 0).unwrap(), Grounding::Existing(b));
    // Without a reference the smallest id wins; equidistant ties also go to the smallest id.
    assert_eq!(g.lookup("table", None, None), Some(a));
    assert_eq!(g.lookup("table", Some(&Point3::new(2.5, 0.0, 0.7)), None), Some(a));
}

#[test]
fn verbal_assertion_places_unseen_object() {
    let (mut g, _, _, table) = household();
    let delta = g
        .apply_assertion(&on("apple", "cleaning table", 0.8, Source::Verbal, 100))
        .unwrap();
    assert_eq!(delta.added_nodes.len(), 1);
    assert_eq!(delta.added_edges.len(), 1);
    assert!(delta.added_edges[0].active);
    assert!(delta.superseded_edges.is_empty());
    let apple = delta.added_nodes[0].id;
    let active = g.resolve_placement(apple, 100).unwrap().unwrap();
    assert_eq!(active.object, table);
    assert_eq!(active.source, Source::Verbal);
}

#[test]
fn reapplying_identical_assertion_changes_no_active_placement() {
    let (mut g, _, _, _) = household();
    let a = on("apple", "cleaning table", 0.8, Source::Verbal, 100);
    let first = g.apply_assertion(&a).unwrap();
    let apple = first.added_nodes[0].id;
    let active_before = g.resolve_placement(apple, 100).unwrap().unwrap().id;

    let second = g.apply_assertion(&a).unwrap();
    assert!(second.added_nodes.is_empty());
    assert!(second.superseded_edges.is_empty());
    assert!(!second.added_edges[0].active);
    assert_eq!(g.resolve_placement(apple, 100).unwrap().unwrap().id, active_before);
    // History keeps both.
    assert_eq!(g.placement_history(apple).len(), 2);
}

#[test]
fn fresh_verbal_cue_overrides_stale_observation() {
    // 0.9 decays below 0.8 only after 6000·log2(0.9/0.8) ≈ 1019.6 ticks, so an
    // assertion 1000 ticks later still loses and one 1100 ticks later wins.
    assert!(decay_oracle(0.9, 0, 1000) > 0.8);
    assert!(decay_oracle(0.9, 0, 1100) < 0.8);

    let (mut g, _, shelf, table) = household();
    g.apply_assertion(&on("apple", "shelf", 0.9, Source::Geometric, 0)).unwrap();
    let apple = g.find_nodes("apple")[0];
    assert_eq!(g.resolve_placement(apple, 0).unwrap().unwrap().object, shelf);

    let delta = g
        .apply_assertion(&on("apple", "cleaning table", 0.8, Source::Verbal, 1100))
        .unwrap();
    assert_eq!(g.resolve_placement(apple, 1100).unwrap().unwrap().object, table);
    assert_eq!(delta.superseded_edges.len(), 1);
    assert_eq!(delta.superseded_edges[0].edge.object, shelf);
    assert!(!delta.superseded_edges[0].active);
}

#[test]
fn stale_observation_survives_cue_within_crossover() {
    let (mut g, _, shelf, _) = household();
    g.apply_assertion(&on("apple", "shelf", 0.9, Source::Geometric, 0)).unwrap();
    let delta = g
        .apply_assertion(&on("apple", "cleaning table", 0.8, Source::Verbal, 1000))
        .unwrap();
    let apple = g.find_nodes("apple")[0];
    assert!(delta.superseded_edges.is_empty());
    for now in [1000, 5000, 60_000] {
        assert_eq!(g.resolve_placement(apple, now).unwrap().unwrap().object, shelf);
    }
}

#[test]
fn resolve_singleton_and_errors() {
    let (mut g, room, shelf, _) = household();
    g.apply_assertion(&on("cup", "shelf", 0.5, Source::Written, 7)).unwrap();
    let cup = g.find_nodes("cup")[0];
    assert_eq!(g.resolve_placement(cup, 7).unwrap().unwrap().object, shelf);
    assert_eq!(g.resolve_placement(NodeId(999), 0), Err(GraphError::UnknownNode(NodeId(999))));
    assert_eq!(g.resolve_placement(room, 0), Err(GraphError::NotAnObject(room)));
}

#[test]
fn equal_scores_break_on_source_rank() {
    let (mut g, _, shelf, table) = household();
    g.apply_assertion(&on("cup", "cleaning table", 0.7, Source::Written, 50)).unwrap();
    g.apply_assertion(&on("cup", "shelf", 0.7, Source::Verbal, 50)).unwrap();
    let cup = g.find_nodes("cup")[0];
    let active = g.resolve_placement(cup, 80).unwrap().unwrap();
    assert_eq!(active.object, shelf);
    assert_eq!(active.source, Source::Verbal);
    assert_ne!(active.object, table);
}

#[test]
fn equal_scores_break_on_recency_before_source() {
    let (mut g, _, shelf, table) = household();
    // Identical effective confidence by construction: 0.8·2^-1 == 0.4.
    assert_eq!(decayed_confidence(0.8, 0, 6000, HALF_LIFE), 0.4);
    g.apply_assertion(&on("cup", "shelf", 0.8, Source::Geometric, 0)).unwrap();
    g.apply_assertion(&on("cup", "cleaning table", 0.4, Source::Prior, 6000)).unwrap();
    let cup = g.find_nodes("cup")[0];
    let active = g.resolve_placement(cup, 6000).unwrap().unwrap();
    assert_eq!(active.object, table);
    assert_ne!(active.object, shelf);
}

#[test]
fn effective_confidence_matches_oracle() {
    let (mut g, _, _, _) = household();
    g.apply_assertion(&on("cup", "shelf", 0.63, Source::Written, 250)).unwrap();
    let edge = g.placement_history(g.find_nodes("cup")[0])[0].clone();
    for now in [0, 250, 251, 6250, 123_456] {
        let ours = g.effective_confidence(&edge, now);
        assert!((ours - decay_oracle(0.63, 250, now)).abs() < 1e-9);
    }
}

#[test]
fn ungroundable_landmark_is_rejected_without_side_effects() {
    let (mut g, _, _, _) = household();
    let before = g.clone();
    let err = g
        .apply_assertion(&on("apple", "laundry machine", 0.8, Source::Verbal, 5))
        .unwrap_err();
    assert!(matches!(
        err,
        GraphError::Rejected {
            reason: RejectReason::UngroundableLandmark(_),
            ..
        }
    ));
    assert_eq!(g, before);
}

#[test]
fn map_entities_cannot_be_moved() {
    let (mut g, _, _, _) = household();
    let err = g
        .apply_assertion(&SemanticAssertion::new("shelf", Relation::In, "cleaning room", 0.8, Source::Verbal, 5))
        .unwrap_err();
    assert!(matches!(
        err,
        GraphError::Rejected {
            reason: RejectReason::FixedMapEntity(_),
            ..
        }
    ));
    g.check_integrity().unwrap();
}

#[test]
fn locate_follows_placement_to_room() {
    let (mut g, cleaning, _, table) = household();
    g.apply_assertion(&on("apple", "cleaning table", 0.8, Source::Verbal, 0)).unwrap();
    let chain = g.locate("The Apple", 0).unwrap();
    assert_eq!(chain.support, table);
    assert_eq!(chain.room, Some(cleaning));
    assert!((chain.confidence - 0.8).abs() < 1e-12);
    assert!(g.locate("banana", 0).is_none());
}

#[test]
fn locate_ignores_near_edges() {
    let (mut g, _, _, _) = household();
    g.apply_assertion(&SemanticAssertion::new("cup", Relation::Near, "shelf", 0.9, Source::Geometric, 0))
        .unwrap();
    assert!(g.locate("cup", 0).is_none());
}

#[test]
fn contents_list_active_placements_only() {
    let (mut g, _, shelf, table) = household();
    assert!(g.query_contents(table, 0).unwrap().is_empty());
    g.apply_assertion(&on("apple", "cleaning table", 0.8, Source::Verbal, 0)).unwrap();
    g.apply_assertion(&on("orange", "cleaning table", 0.7, Source::Written, 1)).unwrap();
    let apple = g.find_nodes("apple")[0];
    let orange = g.find_nodes("orange")[0];
    assert_eq!(g.query_contents(table, 1).unwrap(), vec![apple, orange]);

    g.apply_assertion(&on("orange", "shelf", 0.9, Source::Geometric, 2)).unwrap();
    // Oracle: orange's resolved placement now targets the shelf.
    assert_eq!(g.resolve_placement(orange, 2).unwrap().unwrap().object, shelf);
    assert_eq!(g.query_contents(table, 2).unwrap(), vec![apple]);
    assert_eq!(g.query_contents(shelf, 2).unwrap(), vec![orange]);
    assert!(g.query_contents(NodeId(77), 0).is_err());
}

#[test]
fn snapshot_round_trip_empty() {
    let g = SceneGraph::default();
    let restored = SceneGraph::restore(g.to_json().as_bytes()).unwrap();
    assert_eq!(restored, g);
}

#[test]
fn snapshot_round_trip_preserves_resolution() {
    let (mut g, _, _, _) = household();
    g.apply_assertion(&on("apple", "shelf", 0.9, Source::Geometric, 0)).unwrap();
    g.apply_assertion(&on("apple", "cleaning table", 0.8, Source::Verbal, 2000)).unwrap();
    let restored = SceneGraph::restore(g.to_json().as_bytes()).unwrap();
    let apple = g.find_nodes("apple")[0];
    for now in [0, 500, 6000] {
        assert_eq!(
            g.resolve_placement(apple, now).unwrap(),
            restored.resolve_placement(apple, now).unwrap()
        );
    }
    assert_eq!(restored, g);
}

#[test]
fn snapshot_json_shape() {
    let (mut g, _, _, _) = household();
    g.apply_assertion(&on("apple", "shelf", 0.9, Source::Geometric, 3)).unwrap();
    let value: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    assert_eq!(value["tick"], 3);
    let edge = &value["edges"][2];
    for field in ["subject", "relation", "object", "confidence", "source", "asserted_at", "active"] {
        assert!(edge.get(field).is_some(), "missing {field}");
    }
    assert_eq!(edge["relation"], "on");
    assert_eq!(value["nodes"][0]["kind"], "room");
}

#[test]
fn truncated_snapshot_is_malformed() {
    let (g, _, _, _) = household();
    let json = g.to_json();
    let err = SceneGraph::restore(&json.as_bytes()[..json.len() / 2]).unwrap_err();
    let GraphError::Malformed { line, column, .. } = err else {
        panic!("expected malformed error, got {err:?}");
    };
    assert_eq!(line, 1);
    assert!(column > 0);
}

#[test]
fn replaying_deltas_rebuilds_graph() {
    let (base, _, _, _) = household();
    let mut live = base.clone();
    let mut deltas = Vec::new();
    deltas.push(live.apply_assertion(&on("apple", "shelf", 0.9, Source::Geometric, 10)).unwrap());
    deltas.push(live.apply_assertion(&on("apple", "cleaning table", 0.8, Source::Verbal, 3000)).unwrap());
    let robot = live.add_robot("robot", Pose::at(0.0, 0.0, 0.0), 0);
    let mut replayed = base;
    replayed.add_robot("robot", Pose::at(0.0, 0.0, 0.0), 0);
    deltas.push(live.set_pose(robot, Pose::at(1.0, 1.0, 0.0), 3001).unwrap());
    for d in &deltas {
        replayed.apply_delta(d).unwrap();
    }
    assert_eq!(replayed.snapshot(), live.snapshot());
}

fn arb_assertion() -> impl Strategy<Value = SemanticAssertion> {
    (
        prop::sample::select(vec!["apple", "orange", "cup"]),
        prop::sample::select(vec![Relation::On, Relation::In, Relation::At, Relation::Near]),
        prop::sample::select(vec!["shelf", "cleaning table", "cleaning room", "laundry machine"]),
        0.0f64..=1.0,
        prop::sample::select(Source::ALL.to_vec()),
        0u64..20_000,
    )
        .prop_map(|(s, r, o, c, src, t)| SemanticAssertion::new(s, r, o, c, src, t))
}

proptest! {
    #[test]
    fn snapshot_round_trip_is_observationally_equal(assertions in prop::collection::vec(arb_assertion(), 0..40), now in 0u64..40_000) {
        let (mut g, _, _, _) = household();
        for a in &assertions {
            let _ = g.apply_assertion(a);
        }
        let restored = SceneGraph::restore(g.to_json().as_bytes()).unwrap();
        prop_assert_eq!(&restored, &g);
        for object in g.nodes_of_kind(EntityKind::Object) {
            prop_assert_eq!(
                g.resolve_placement(object.id, now).unwrap(),
                restored.resolve_placement(object.id, now).unwrap()
            );
        }
    }

    #[test]
    fn history_counts_every_accepted_placement(assertions in prop::collection::vec(arb_assertion(), 0..60)) {
        let (mut g, _, _, _) = household();
        let mut accepted = 0;
        for a in &assertions {
            if g.apply_assertion(a).is_ok() && a.relation.is_placement() {
                accepted += 1;
            }
        }
        let history: usize = g
            .nodes_of_kind(EntityKind::Object)
            .map(|o| g.placement_history(o.id).len())
            .sum();
        prop_assert_eq!(history, accepted);
        prop_assert!(g.check_integrity().is_ok());
    }
}
