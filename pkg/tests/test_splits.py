from __future__ import annotations

import numpy as np
import pytest

from otib import domains, splits
from otib.domains import ARITHMETIC, GRID, IMAGE, oracle_execute
from otib.domains.grid import LETTERS
from otib.splits import (
    REGIME_COMP_OOD,
    REGIME_ID,
    REGIME_LEN_OOD,
    EmptyRegimeError,
    build_split,
    generate_eval_set,
    generate_training_set,
)


def classes_from_words(words):
    return {tuple(sorted(LETTERS[ch] for ch in w)) for w in words.split()}


GRID_ANCHORS = "UUU DDD LLL RRR"


def test_grid_alpha033_matches_published_listing():
    spec = build_split(GRID, 0.33, seed=0)
    train = {c.indices for c in spec.train_classes}
    ood = {c.indices for c in spec.comp_ood_classes}
    assert train == classes_from_words(GRID_ANCHORS + " U LU DL DR DD DDL DRR")
    # complement of the listed training classes (the published held-out list
    # contains one entry with a canceling move pair, which cannot be a class)
    assert ood == classes_from_words("L R D LL RR UU RU LUU LLU DLL RUU DDR RRU")
    assert len(train) == 11 and len(ood) == 13


def test_grid_alpha066_matches_published_training_listing():
    spec = build_split(GRID, 0.66, seed=0)
    train = {c.indices for c in spec.train_classes}
    assert train == classes_from_words(
        GRID_ANCHORS + " U D R LU DL DR UU DD RR LUU LLU DRR DDR RRU"
    )
    # held-out set is the complement of the listed training classes
    ood = {c.indices for c in spec.comp_ood_classes}
    assert ood == classes_from_words("L LL RU RUU DLL DDL")


def test_grid_alpha100_has_no_comp_ood():
    spec = build_split(GRID, 1.00, seed=0)
    assert not spec.comp_ood_classes
    assert len(spec.train_classes) == 24


def test_arithmetic_heldout_listings():
    spec = build_split(ARITHMETIC, 0.66, seed=0)
    ood = {c.indices for c in spec.comp_ood_classes}
    expected = {
        (1,),
        (1, 2), (0, 2),
        (1, 3, 3), (0, 0, 3), (1, 1, 2), (0, 1, 3), (0, 0, 2),
    }
    assert ood == expected
    spec33 = build_split(ARITHMETIC, 0.33, seed=0)
    assert len(spec33.comp_ood_classes) == 16
    singles = {c.indices for c in spec33.comp_ood_classes if c.length == 1}
    assert singles == {(1,), (2,)}  # x3 and x5 never seen alone


def test_image_alpha_listings_counts():
    for alpha, (n_train, n_ood) in {0.33: (18, 21), 0.66: (28, 11), 1.00: (39, 0)}.items():
        spec = build_split(IMAGE, alpha, seed=0)
        assert len(spec.train_classes) == n_train
        assert len(spec.comp_ood_classes) == n_ood


@pytest.mark.parametrize("domain", [GRID, ARITHMETIC, IMAGE])
@pytest.mark.parametrize("alpha", [0.33, 0.66, 1.00])
def test_split_disjoint_and_covering(domain, alpha):
    spec = build_split(domain, alpha, seed=1)
    assert not (spec.train_classes & spec.comp_ood_classes)
    short = domains.enumerate_classes(domain, 1, spec.short_len_max)
    assert spec.train_classes | spec.comp_ood_classes == short
    assert spec.anchors <= spec.train_classes


def test_listed_split_is_seed_independent():
    a = build_split(GRID, 0.33, seed=0)
    b = build_split(GRID, 0.33, seed=999)
    assert a.train_classes == b.train_classes


def test_sampled_split_respects_alpha_fraction_and_anchors():
    spec = build_split(GRID, 0.33, seed=5, use_listing=False)
    non_anchor_total = 20
    sampled = spec.train_classes - spec.anchors
    assert len(sampled) == round(0.33 * non_anchor_total)
    assert spec.anchors <= spec.train_classes
    again = build_split(GRID, 0.33, seed=5, use_listing=False)
    assert again.train_classes == spec.train_classes
    other = build_split(GRID, 0.33, seed=6, use_listing=False)
    assert other.anchors <= other.train_classes


def test_unseen_primitive_guarantee_at_alpha033():
    grid_spec = build_split(GRID, 0.33, seed=0)
    singles = {c.indices[0] for c in grid_spec.train_classes if c.length == 1}
    assert singles == {0}  # only "up" is seen alone
    for prim in (1, 2, 3):
        assert any(
            prim in c.indices for c in grid_spec.train_classes if c.length > 1
        ), f"primitive {prim} must appear inside a longer training class"
    arith_spec = build_split(ARITHMETIC, 0.33, seed=0)
    arith_singles = {c.indices[0] for c in arith_spec.train_classes if c.length == 1}
    assert 1 not in arith_singles and 2 not in arith_singles
    assert any(1 in c.indices for c in arith_spec.train_classes if c.length > 1)
    assert any(2 in c.indices for c in arith_spec.train_classes if c.length > 1)


def test_training_set_pairs_satisfy_oracle():
    spec = build_split(GRID, 0.33, seed=0)
    rng = np.random.default_rng(0)
    ts = generate_training_set(spec, 64, rng)
    for i in range(len(ts)):
        prog = ts.truth_program(i)
        assert np.array_equal(oracle_execute(ts.xs[i], prog), ts.ys[i])


def test_training_set_class_histogram_is_uniform_within_3_sigma():
    spec = build_split(GRID, 0.33, seed=0)
    rng = np.random.default_rng(1)
    n = 20_000
    ts = generate_training_set(spec, n, rng)
    k = len(ts.class_table)
    counts = np.bincount(ts.truth_idx, minlength=k)
    p = 1.0 / k
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma), counts


def test_eval_set_support_query_share_program():
    spec = build_split(ARITHMETIC, 0.66, seed=0)
    rng = np.random.default_rng(2)
    ev = generate_eval_set(spec, REGIME_COMP_OOD, 50, rng)
    ood = {c.indices for c in spec.comp_ood_classes}
    for i in range(len(ev)):
        prog = ev.truth_program(i)
        assert prog.indices in ood
        assert oracle_execute(int(ev.xs[i]), prog) == int(ev.ys[i])
        assert oracle_execute(int(ev.xq[i]), prog) == int(ev.yq[i])


def test_len_ood_programs_outside_short_range():
    spec = build_split(GRID, 0.33, seed=0)
    rng = np.random.default_rng(3)
    ev = generate_eval_set(spec, REGIME_LEN_OOD, 40, rng)
    short = {c.indices for c in domains.enumerate_classes(GRID, 1, 3)}
    lengths = ev.truth_lengths()
    assert lengths.min() >= 4 and lengths.max() <= 8
    for i in range(len(ev)):
        assert ev.truth_program(i).indices not in short


def test_arith_len_ood_lengths_and_purity():
    spec = build_split(ARITHMETIC, 1.00, seed=0)
    rng = np.random.default_rng(4)
    ev = generate_eval_set(spec, REGIME_LEN_OOD, 40, rng)
    train = {c.indices for c in spec.train_classes}
    lengths = ev.truth_lengths()
    assert lengths.min() >= 4 and lengths.max() <= 6
    assert all(ev.truth_program(i).indices not in train for i in range(len(ev)))


def test_comp_ood_empty_at_alpha_one():
    spec = build_split(GRID, 1.00, seed=0)
    with pytest.raises(EmptyRegimeError):
        generate_eval_set(spec, REGIME_COMP_OOD, 4, np.random.default_rng(0))


def test_generation_is_deterministic_given_seed():
    spec = build_split(GRID, 0.66, seed=0)
    a = generate_training_set(spec, 32, np.random.default_rng(42))
    b = generate_training_set(spec, 32, np.random.default_rng(42))
    assert np.array_equal(a.xs, b.xs) and np.array_equal(a.ys, b.ys)
    assert np.array_equal(a.truth_idx, b.truth_idx)
    ea = generate_eval_set(spec, REGIME_ID, 16, np.random.default_rng(9))
    eb = generate_eval_set(spec, REGIME_ID, 16, np.random.default_rng(9))
    assert np.array_equal(ea.xq, eb.xq)


def test_invalid_alpha_rejected():
    with pytest.raises(ValueError):
        build_split(GRID, 0.5, seed=0)
