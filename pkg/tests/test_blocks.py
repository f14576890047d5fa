import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import pair_difference_counts

from sdsforge.blocks import (
    CandidateSpace,
    InfeasibleCardinality,
    MismatchedGroup,
    SkewImpossible,
    count_candidates,
    diff_vector,
    emit_files,
    find_walk_seed,
    generate_candidates,
    make_candidate,
    read_kv,
    read_label_line,
    read_multiplicities,
    write_block_files,
)
from sdsforge.zmod import orbit_table, subgroup_closure, sym_class_table


def _group(v, gens):
    H = subgroup_closure(v, gens)
    return orbit_table(H), sym_class_table(H)


def _brute_class_counts(v, X, classes):
    raw = pair_difference_counts(v, [X])
    return tuple(raw[c.label] for c in classes.classes), raw


def test_diff_vector_fano():
    table, classes = _group(7, [2])
    x = make_candidate(table, [1])
    assert x.union == (1, 2, 4)
    assert diff_vector(x, classes).counts == (1,)


def test_diff_vector_single_point_orbit(group213):
    _, table, classes = group213
    dv = diff_vector(make_candidate(table, [71]), classes)
    assert dv.counts == (0,) * classes.class_count


def test_diff_vector_v13_against_brute_force():
    table, classes = _group(13, [3])
    x = make_candidate(table, [1])
    assert x.union == (1, 3, 9)
    expected, raw = _brute_class_counts(13, x.union, classes)
    assert diff_vector(x, classes).counts == expected
    assert sum(raw) == 6


def test_diff_vector_rejects_other_group(group251):
    _, table, _ = group251
    _, classes = _group(251, [6])
    with pytest.raises(MismatchedGroup):
        diff_vector(make_candidate(table, [1]), classes)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_diff_vector_matches_pair_enumeration(data):
    v, gens = data.draw(st.sampled_from([(31, [5]), (43, [6]), (63, [4]), (73, [8]), (91, [3])]))
    table, classes = _group(v, gens)
    labels = data.draw(st.lists(st.sampled_from([o.label for o in table.nontrivial]), unique=True))
    x = make_candidate(table, labels)
    dv = diff_vector(x, classes, check=True)
    expected, raw = _brute_class_counts(v, x.union, classes)
    assert dv.counts == expected
    # the per-residue count is constant on every class
    for c, count in zip(classes.classes, dv.counts):
        assert {raw[m] for m in c.members} == {count}
    assert dv.total() == x.cardinality * (x.cardinality - 1)


def test_candidates_v251_have_25_labels(group251):
    _, table, classes = group251
    cands = list(generate_candidates(table, 125, budget=50, seed=3))
    assert len(cands) == 50
    assert len({c.index_set for c in cands}) == 50
    assert all(len(c.index_set) == 25 and c.cardinality == 125 for c in cands)


def test_skew_candidates_v213(group213):
    _, table, _ = group213
    cands = list(generate_candidates(table, 106, skew=True, budget=200, seed=1))
    assert len(cands) == 200
    for c in cands:
        assert len(c.index_set) == 16
        assert sum(1 for lab in c.index_set if table.orbit(lab).size == 1) == 1
        X = set(c.union)
        assert 0 not in X
        assert all((i in X) != ((213 - i) in X) for i in range(1, 213))


def test_empty_candidate(group251):
    _, table, classes = group251
    cands = list(generate_candidates(table, 0, budget=5, seed=0))
    assert [c.index_set for c in cands] == [()]
    F, Fp = emit_files(cands, classes)
    assert F == "\n"
    assert Fp == " ".join(["0"] * 25) + "\n"


def test_errors(group251):
    _, table, _ = group251
    with pytest.raises(InfeasibleCardinality):
        generate_candidates(table, 7, budget=1)
    with pytest.raises(InfeasibleCardinality):
        generate_candidates(table, 120, skew=True, budget=1)
    t13, _ = _group(13, [5])
    with pytest.raises(SkewImpossible):
        generate_candidates(t13, 6, skew=True, budget=1)


def test_small_space_is_enumerated():
    table, _ = _group(31, [2])  # six orbits of size 5
    assert count_candidates(table, 15) == 20
    got = {c.index_set for c in generate_candidates(table, 15, budget=100, seed=0)}
    want = set(itertools.combinations([o.label for o in table.nontrivial], 3))
    assert got == want


def test_sampling_is_roughly_uniform_over_compositions(group213):
    _, table, _ = group213
    # k=8: one size-7 orbit plus one size-1 orbit (60 ways), never two size-1 orbits
    assert count_candidates(table, 8) == 60
    k9 = list(generate_candidates(table, 9, budget=25, seed=4))
    assert all(sum(1 for lab in c.index_set if table.orbit(lab).size == 1) == 2 for c in k9)


@pytest.mark.parametrize("mode", ["sample", "walk"])
def test_generation_is_deterministic(group251, mode):
    _, table, _ = group251
    a = [c.index_set for c in generate_candidates(table, 120, budget=300, seed=11, mode=mode)]
    b = [c.index_set for c in generate_candidates(table, 120, budget=300, seed=11, mode=mode)]
    c = [c.index_set for c in generate_candidates(table, 120, budget=300, seed=12, mode=mode)]
    assert a == b
    assert a != c


@pytest.mark.parametrize("v, gens, k, skew", [(31, [5], 15, False), (43, [6], 21, True), (63, [4], 15, False)])
def test_candidate_space_is_a_bijection(v, gens, k, skew):
    table, _ = _group(v, gens)
    space = CandidateSpace(table, k, skew)
    seen = set()
    for r in range(space.total):
        labels = space.labels(r)
        assert space.rank(labels) == r
        assert len(table.union(labels)) == k
        seen.add(labels)
    assert len(seen) == space.total == count_candidates(table, k, skew)


def test_walk_visits_consecutive_ranks(group251):
    _, table, _ = group251
    space = CandidateSpace(table, 115, False)
    walk = [c.index_set for c in generate_candidates(table, 115, budget=20, seed=9, mode="walk")]
    start = space.start(9)
    assert walk == [space.labels((start + i) % space.total) for i in range(20)]


def test_find_walk_seed():
    table, _ = _group(73, [8])  # 24 orbits of size 3
    labels = tuple(o.label for o in table.nontrivial[::2])
    seed = find_walk_seed(table, 36, False, labels, budget=1000)
    walk = {c.index_set for c in generate_candidates(table, 36, budget=1000, seed=seed, mode="walk")}
    assert labels in walk
    for earlier in range(seed):
        before = {c.index_set for c in generate_candidates(table, 36, budget=1000, seed=earlier, mode="walk")}
        assert labels not in before


def test_file_round_trip(tmp_path, group213):
    _, table, classes = group213
    cands = list(generate_candidates(table, 92, budget=40, seed=2))
    F, Fp = emit_files(cands, classes)
    assert len(F.splitlines()) == len(Fp.splitlines()) == 40
    meta = write_block_files(tmp_path / "blk", iter(cands), classes, {"k": 92, "seed": 2}, batch=7)
    assert meta["count"] == 40
    assert (tmp_path / "blk.F").read_text() == F
    assert (tmp_path / "blk.Fp").read_text() == Fp
    side = read_kv(tmp_path / "blk.meta")
    assert side["v"] == "213" and side["n"] == "16" and side["H"] == "37" and side["k"] == "92"
    assert side["classes"].split(",") == [str(x) for x in classes.labels]
    arr = read_multiplicities(tmp_path / "blk.Fp", 16)
    for i, c in enumerate(cands):
        assert tuple(arr[i]) == diff_vector(c, classes).counts
        assert read_label_line(tmp_path / "blk.F", i + 1) == c.index_set
    for line in Fp.splitlines():
        assert len(line.split(" ")) == 16


def test_sum_rule_for_emitted_rows(group631):
    _, table, classes = group631
    cands = list(generate_candidates(table, 330, budget=20, seed=0))
    _, Fp = emit_files(cands, classes)
    rows = np.array([[int(x) for x in line.split()] for line in Fp.splitlines()])
    assert rows.shape == (20, 21)
    assert (rows @ np.array(classes.sizes) == 330 * 329).all()
