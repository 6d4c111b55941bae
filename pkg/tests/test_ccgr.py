import json
import random

import pytest

from src.core.exceptions import ConfigError
from src.core.history import EpisodeHistory, RecordType, StepRecord
from src.modules.memory_mod.ccgr import (
    MemoryKind,
    Relation,
    RetrievalQuery,
    TrajectoryGraph,
    jaccard,
    lcs_length,
    lcs_ratio
)
from tests.conftest import kitchen_world


def _record(step, action, pre, post, error_type=None, level=None, record_type=RecordType.STEP, held=True):
    return StepRecord(
        step=step, node=f"s{step + 1}", action=action, edge_kind="main", error_value=0.0 if error_type is None else 0.5,
        error_type=error_type, level=level, record_type=record_type,
        preconditions_held=held, pre_facts=list(pre), post_facts=list(post)
    )


def _history(*records):
    history = EpisodeHistory()
    for record in records:
        history.append_step(record)
    return history


def _fridge_episode():
    """Walk in, open fails on a stale perception, close-then-open fixes it."""
    return _history(
        _record(0, "[walk] <kitchen>", ["agent_in(livingroom)"], ["agent_in(kitchen)"]),
        _record(1, "[open] <fridge>", ["closed(fridge)", "agent_in(kitchen)"], ["closed(fridge)"],
                error_type="Perception-Mismatch-Error", level="L1"),
        _record(2, "[close] <fridge>", ["closed(fridge)"], ["closed(fridge)"], record_type=RecordType.SUBSTEP),
        _record(3, "[open] <fridge>", ["closed(fridge)"], ["open(fridge)"], record_type=RecordType.SUBSTEP),
    )


def _sofa_episode():
    return _history(
        _record(0, "[walk] <livingroom>", ["agent_in(kitchen)"], ["agent_in(livingroom)"]),
        _record(1, "[sit] <sofa>", ["agent_in(livingroom)", "standing(agent)"], ["sitting(sofa)"], held=False),
    )


def _fridge_query():
    return RetrievalQuery(
        goal_tokens=frozenset({"open(fridge)"}),
        predicates=frozenset({"closed(fridge)", "agent_in(kitchen)"}),
        recent_actions=("walk", "open")
    )


# -- helpers -------------------------------------------------------------------

def test_jaccard_and_lcs():
    assert jaccard(frozenset("ab"), frozenset("bc")) == pytest.approx(1 / 3)
    assert jaccard(frozenset(), frozenset()) == 0.0
    assert lcs_length(["walk", "open", "grab"], ["walk", "grab"]) == 2
    assert lcs_ratio(["walk", "open", "grab"], ["walk", "grab"]) == pytest.approx(2 / 3)
    assert lcs_ratio([], []) == 0.0


# -- ingest --------------------------------------------------------------------

def test_ingest_builds_triples_and_relations():
    memory = TrajectoryGraph()
    assert memory.ingest(_fridge_episode(), ["open(fridge)"], "fridge") == 12
    assert memory.episodes == ["fridge"]
    assert memory.node("fridge:1:Action").label == "open(fridge)"
    assert memory.node("fridge:1:Outcome").label == "Perception-Mismatch-Error"
    assert len(memory.edges(Relation.CAUSES)) == 4
    assert len(memory.edges(Relation.ENABLES)) == 4
    assert len(memory.edges(Relation.TEMPORAL)) == 4 * 2 + 3
    recovers = memory.edges(Relation.RECOVERS_FROM)
    assert [(e.src, e.dst) for e in recovers] == [("fridge:2:Action", "fridge:1:Outcome")]


def test_ingest_skips_dossier_records_and_empty_histories():
    memory = TrajectoryGraph()
    history = _sofa_episode()
    history.append_step(_record(2, "[walk] <kitchen>", [], [], record_type=RecordType.DOSSIER))
    assert memory.ingest(history, ["sitting(sofa)"]) == 6
    assert memory.ingest(EpisodeHistory(), ["sitting(sofa)"]) == 0
    assert len(memory.episodes) == 1


def test_enables_only_when_preconditions_held():
    memory = TrajectoryGraph()
    memory.ingest(_sofa_episode(), ["sitting(sofa)"], "sofa")
    assert [e.dst for e in memory.edges(Relation.ENABLES)] == ["sofa:0:Action"]


def test_duplicate_episode_ids_get_suffixed():
    memory = TrajectoryGraph()
    memory.ingest(_sofa_episode(), ["sitting(sofa)"], "ep")
    memory.ingest(_sofa_episode(), ["sitting(sofa)"], "ep")
    assert memory.episodes == ["ep", "ep-1"]


# -- retrieval -----------------------------------------------------------------

def test_retrieve_ranks_matching_episode_first_with_provenance():
    memory = TrajectoryGraph(window=3)
    memory.ingest(_fridge_episode(), ["open(fridge)"], "fridge")
    memory.ingest(_sofa_episode(), ["sitting(sofa)"], "sofa")
    results = memory.retrieve(_fridge_query(), k=2)
    assert [r.episode for r in results] == ["fridge", "sofa"]
    best = results[0]
    assert best.combined > results[1].combined
    assert "close(fridge)" in best.provenance["recovery_patterns"]
    assert "Perception-Mismatch-Error" in best.provenance["failure_modes"]
    assert all(key.startswith("fridge:") for key in best.nodes)
    assert len(memory.retrieve(_fridge_query(), k=1)) == 1


def test_retrieve_breaks_ties_by_recency():
    memory = TrajectoryGraph()
    memory.ingest(_fridge_episode(), ["open(fridge)"], "older")
    memory.ingest(_fridge_episode(), ["open(fridge)"], "newer")
    results = memory.retrieve(_fridge_query(), k=2)
    assert results[0].combined == results[1].combined
    assert [r.episode for r in results] == ["newer", "older"]


def test_retrieve_on_empty_memory():
    assert TrajectoryGraph().retrieve(_fridge_query()) == []


def test_retrieve_skips_episodes_without_shared_tokens():
    memory = TrajectoryGraph()
    memory.ingest(_sofa_episode(), ["sitting(sofa)"], "sofa")
    query = RetrievalQuery(goal_tokens=frozenset({"cut(bread)"}), recent_actions=("cut",))
    assert memory.retrieve(query) == []


def test_weights_override_changes_scores():
    memory = TrajectoryGraph()
    memory.ingest(_fridge_episode(), ["open(fridge)"], "fridge")
    semantic = memory.retrieve(_fridge_query(), weights=(1.0, 0.0))[0]
    structural = memory.retrieve(_fridge_query(), weights=(0.0, 1.0))[0]
    assert semantic.combined == pytest.approx(semantic.semantic)
    assert structural.combined == pytest.approx(structural.structural)


@pytest.mark.parametrize("window", [1, 2, 3, 5])
def test_best_window_matches_brute_force(window):
    history = _fridge_episode()
    goals = {"open(fridge)"}
    query = _fridge_query()
    memory = TrajectoryGraph(window=window)
    memory.ingest(history, goals, "fridge")

    records = history.steps
    best = None
    for i, record in enumerate(records):
        verb, _, rest = record.action.partition("] <")
        anchor_tokens = set(record.pre_facts) | {verb.lstrip("["), rest.split(">")[0]}
        if not anchor_tokens & query.tokens:
            continue
        chunk = records[i:i + window]
        verbs = [r.action_verb for r in chunk]
        tokens = set(goals) | set(verbs)
        for r in chunk:
            tokens |= set(r.pre_facts)
        score = 0.5 * jaccard(frozenset(tokens), query.tokens) + 0.5 * lcs_ratio(verbs, query.recent_actions)
        best = score if best is None else max(best, score)

    assert memory.retrieve(query, k=1)[0].combined == pytest.approx(best)


FACTS = ["closed(fridge)", "open(fridge)", "agent_in(kitchen)", "agent_in(livingroom)", "on(mug,counter)",
         "holding(mug)", "sitting(sofa)", "switched_off(microwave)"]
LINES = ["[walk] <kitchen>", "[walk] <livingroom>", "[open] <fridge>", "[close] <fridge>", "[grab] <mug>",
         "[lookat] <mug>", "[putin] <mug> <fridge>", "[sit] <sofa>"]
VERBS = ["walk", "open", "close", "grab", "lookat", "putin", "sit"]


def _random_episode(rng):
    records = []
    for i in range(rng.randint(1, 8)):
        failed = rng.random() < 0.3
        records.append(_record(
            i, rng.choice(LINES), rng.sample(FACTS, rng.randint(1, 3)), rng.sample(FACTS, rng.randint(1, 3)),
            error_type="Timeout-Error" if failed else None, level="L1" if failed else None
        ))
    return _history(*records), set(rng.sample(FACTS, 2))


def _random_query(rng):
    return RetrievalQuery(
        goal_tokens=frozenset(rng.sample(FACTS, rng.randint(0, 2))),
        predicates=frozenset(rng.sample(FACTS, rng.randint(0, 3))),
        recent_actions=tuple(rng.choice(VERBS) for _ in range(rng.randint(0, 4)))
    )


def _enumerate_windows(stored, query, window):
    """Score every anchored window straight from the step records; keep each episode's best."""
    ranked = []
    for recency, (episode, history, goals) in enumerate(stored):
        records = history.steps
        best = None
        for i, record in enumerate(records):
            verb, _, rest = record.action.partition("] <")
            anchor_tokens = set(record.pre_facts) | {verb.lstrip("[")} | set(rest.rstrip(">").split("> <"))
            if not anchor_tokens & query.tokens:
                continue
            chunk = records[i:i + window]
            verbs = [r.action_verb for r in chunk]
            tokens = set(goals) | set(verbs)
            for r in chunk:
                tokens |= set(r.pre_facts)
            score = 0.5 * jaccard(frozenset(tokens), query.tokens) + 0.5 * lcs_ratio(verbs, query.recent_actions)
            if best is None or score > best[0]:
                best = (score, i)
        if best is not None:
            ranked.append((best[0], recency, episode, best[1]))
    ranked.sort(key=lambda r: (-r[0], -r[1], r[2]))
    return [(episode, anchor, score) for score, _, episode, anchor in ranked]


@pytest.mark.parametrize("seed", range(5))
def test_retrieve_matches_window_enumeration_on_random_memories(seed):
    rng = random.Random(seed)
    window = rng.randint(1, 5)
    memory = TrajectoryGraph(window=window)
    stored = []
    for n in range(rng.randint(2, 6)):
        history, goals = _random_episode(rng)
        memory.ingest(history, goals, f"ep{n}")
        stored.append((f"ep{n}", history, goals))
    assert len(memory) <= 200

    for _ in range(20):
        query = _random_query(rng)
        expected = _enumerate_windows(stored, query, window)
        results = memory.retrieve(query, k=len(stored))
        assert [(r.episode, r.anchor) for r in results] == [(e, a) for e, a, _ in expected]
        assert [r.combined for r in results] == pytest.approx([s for _, _, s in expected])
        # one window per episode, and a smaller k is a prefix of a larger one
        assert len({r.episode for r in results}) == len(results)
        for k in range(1, len(stored)):
            assert [r.to_dict() for r in memory.retrieve(query, k=k)] == [r.to_dict() for r in results[:k]]
        assert all(0.0 <= r.semantic <= 1.0 and 0.0 <= r.structural <= 1.0 for r in results)


@pytest.mark.parametrize("kwargs", [{"window": 0}, {"semantic_weight": 0.7}, {"semantic_weight": -0.5, "structural_weight": 1.5}])
def test_invalid_memory_settings(kwargs):
    with pytest.raises(ConfigError):
        TrajectoryGraph(**kwargs)


def test_invalid_retrieval_arguments():
    memory = TrajectoryGraph()
    with pytest.raises(ConfigError):
        memory.retrieve(_fridge_query(), k=0)
    with pytest.raises(ConfigError):
        memory.retrieve(_fridge_query(), weights=(0.6, 0.6))


def test_query_from_context_strips_instance_ids():
    query = RetrievalQuery.from_context(["holding(mug#1)"], kitchen_world(), ["grab"])
    assert "holding(mug)" in query.goal_tokens
    assert "closed(fridge)" in query.predicates
    assert "grab" in query.tokens


# -- persistence ---------------------------------------------------------------

def test_save_and_load(tmp_path):
    memory = TrajectoryGraph(window=2, semantic_weight=0.3, structural_weight=0.7)
    memory.ingest(_fridge_episode(), ["open(fridge)"], "fridge")
    memory.ingest(_sofa_episode(), ["sitting(sofa)"], "sofa")
    path = memory.save(str(tmp_path / "memory" / "ccgr.json"))

    loaded = TrajectoryGraph.load(path)
    assert loaded.to_dict() == memory.to_dict()
    assert [r.to_dict() for r in loaded.retrieve(_fridge_query())] == \
        [r.to_dict() for r in memory.retrieve(_fridge_query())]
    assert loaded.node("fridge:0:State").kind == MemoryKind.STATE


def test_load_rejects_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        TrajectoryGraph.load(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 99}))
    with pytest.raises(ConfigError):
        TrajectoryGraph.load(str(bad))
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        TrajectoryGraph.load(str(bad))
