import numpy as np
import pytest

from diaquad import synth
from diaquad.corpus import parse_dialogue
from diaquad.structure import (RotaryMap, StructureError, assign_threads, build_masks,
                               delta_matrix, local_positions, pairwise_delta,
                               rotate, rotation_matrix, structure_dump,
                               thread_pair_selectors, token_threads, token_utterances)


def helper_dialogue(sentences, replies, speakers=None):
    speakers = speakers or [0] * len(sentences)
    return parse_dialogue({"doc_id": "t", "sentences": sentences, "replies": replies,
                           "speakers": speakers})


def oracle_threads(replies):
    """Independent thread walk: follow parents up to a child of the root."""
    root = replies.index(-1)
    root_children = [i for i, r in enumerate(replies) if r == root]
    out = []
    for i in range(len(replies)):
        if i == root:
            out.append(0)
            continue
        node = i
        while replies[node] != root:
            node = replies[node]
        out.append(1 + root_children.index(node))
    return out


class TestThreads:
    def test_phone_thread_assignment(self, phone_thread):
        threads = assign_threads(phone_thread)
        expected = oracle_threads([-1, 0, 1, 2, 0, 4, 0, 6])
        assert threads.thread_of == expected
        assert threads.thread_of == [0, 1, 1, 1, 2, 2, 3, 3]
        assert threads.n_threads == 4

    def test_single_utterance(self):
        d = helper_dialogue([["hi"]], [-1])
        assert assign_threads(d).thread_of == [0]

    def test_chain(self):
        d = helper_dialogue([["a"], ["b"], ["c"], ["d"]], [-1, 0, 1, 2])
        assert assign_threads(d).thread_of == [0, 1, 1, 1]

    def test_random_trees_match_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            replies = synth.random_tree(rng, int(rng.integers(1, 12)))
            d = helper_dialogue([["w"]] * len(replies), replies)
            assert assign_threads(d).thread_of == oracle_threads(replies)

    def test_multiple_roots_rejected(self, phone_thread_record):
        phone_thread_record["replies"][4] = -1
        with pytest.raises(StructureError, match="roots"):
            assign_threads(parse_dialogue(phone_thread_record))


class TestMasks:
    def test_same_speaker_cells(self, phone_thread):
        masks = build_masks(phone_thread)
        utt = token_utterances(phone_thread)
        tok_u1 = int(np.argwhere(utt == 1)[0][0])
        tok_u3 = int(np.argwhere(utt == 3)[0][0])
        assert masks.sp[tok_u1, tok_u3]  # speakers (0,1,2,1,...): both speaker 1

    def test_different_thread_cells(self, phone_thread):
        masks = build_masks(phone_thread)
        utt = token_utterances(phone_thread)
        tok_u1 = int(np.argwhere(utt == 1)[0][0])   # thread 1
        tok_u4 = int(np.argwhere(utt == 4)[0][0])   # thread 2
        assert not masks.th[tok_u1, tok_u4]

    def test_root_belongs_to_every_thread(self, phone_thread):
        masks = build_masks(phone_thread)
        assert masks.th[0, :].all() and masks.th[:, 0].all()

    def test_within_utterance_all_views(self, phone_thread):
        masks = build_masks(phone_thread)
        utt = token_utterances(phone_thread)
        idx = np.argwhere(utt == 2).ravel()
        block = np.ix_(idx, idx)
        assert masks.th[block].all() and masks.sp[block].all() and masks.rp[block].all()

    def test_reply_mask_needs_an_edge(self):
        d = helper_dialogue([["a"], ["b"], ["c"]], [-1, 0, 1], [0, 1, 2])
        masks = build_masks(d)
        assert masks.rp[0, 1] and masks.rp[1, 2]
        assert not masks.rp[0, 2]  # grandparent is not a direct reply

    def test_symmetry_and_reflexivity_random(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            d = synth.random_dialogue(rng, n_quads=0)
            masks = build_masks(d)
            for mask in (masks.th, masks.sp, masks.rp):
                assert (mask == mask.T).all()
                assert mask.diagonal().all()


class TestLocalPositions:
    def test_root_first_token(self, phone_thread):
        assert local_positions(phone_thread)[0] == 0

    def test_depth_one_concatenation(self):
        d = helper_dialogue([["a"] * 5, ["b"] * 4], [-1, 0])
        pos = local_positions(d)
        assert pos[5] == 5  # first token of the depth-1 utterance

    def test_depth_two_path(self):
        d = helper_dialogue([["a"] * 5, ["b"] * 4, ["c"] * 3], [-1, 0, 1])
        pos = local_positions(d)
        assert pos[5 + 4 + 1] == 5 + 4 + 1  # second token of the depth-2 utterance

    def test_path_walk_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            d = synth.random_dialogue(rng, n_quads=0)
            replies = [u.reply_to for u in d.utterances]
            pos = local_positions(d)
            for utt in d.utterances:
                chain = [utt.index]
                while replies[chain[-1]] != -1:
                    chain.append(replies[chain[-1]])
                path_tokens = [t for ui in reversed(chain) for t in d.utterances[ui].tokens]
                for off, tok in enumerate(d.utterances[utt.index].tokens):
                    assert pos[tok.global_index] == path_tokens.index(tok)


class TestPairwiseDelta:
    def test_branch_cases(self):
        local = np.array([0, 3, 5])
        same = np.array([1, 1, 1])
        assert pairwise_delta(1, 2, same, local) == -2
        lt = np.array([0, 1, 2])
        assert pairwise_delta(1, 2, lt, local) == -8
        assert pairwise_delta(2, 1, lt, local) == 8

    def test_root_thread_compatible_with_all(self):
        local = np.array([2, 7])
        assert pairwise_delta(0, 1, np.array([0, 3]), local) == -5

    def test_matrix_matches_scalar(self, phone_thread):
        threads = assign_threads(phone_thread)
        tok_th = token_threads(phone_thread, threads)
        local = local_positions(phone_thread)
        mat = delta_matrix(phone_thread, threads)
        rng = np.random.default_rng(0)
        for _ in range(300):
            i, j = rng.integers(0, phone_thread.n_tokens, size=2)
            assert mat[i, j] == pairwise_delta(int(i), int(j), tok_th, local)

    def test_antisymmetry_and_zero_diagonal(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            d = synth.random_dialogue(rng, n_quads=0)
            mat = delta_matrix(d)
            assert (mat == -mat.T).all()
            assert (mat.diagonal() == 0).all()

    def test_same_thread_equals_position_difference(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            d = synth.random_dialogue(rng, n_quads=0)
            threads = assign_threads(d)
            tok_th = token_threads(d, threads)
            local = local_positions(d)
            mat = delta_matrix(d, threads)
            same = tok_th[:, None] == tok_th[None, :]
            diff = local[:, None] - local[None, :]
            assert (mat[same] == diff[same]).all()

    def test_selectors_partition_grid(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            d = synth.random_dialogue(rng, n_quads=0)
            same, lt, gt = thread_pair_selectors(token_threads(d, assign_threads(d)))
            assert ((same.astype(int) + lt.astype(int) + gt.astype(int)) == 1).all()


class TestRotary:
    def test_identity_at_zero(self):
        rmap = RotaryMap(dim=8)
        v = np.arange(8.0)
        assert np.allclose(rotate(v, 0, rmap), v)

    def test_single_plane(self):
        rmap = RotaryMap(dim=2)
        out = rotate(np.array([1.0, 0.0]), 1, rmap)
        assert np.allclose(out, [np.cos(1.0), np.sin(1.0)])

    def test_odd_dimension_rejected(self):
        with pytest.raises(ValueError, match="even"):
            RotaryMap(dim=7)

    def test_composition_property(self):
        rmap = RotaryMap(dim=16)
        rng = np.random.default_rng(41)
        for _ in range(20):
            m, n = rng.integers(-50, 50, size=2)
            lhs = rotation_matrix(rmap, m).T @ rotation_matrix(rmap, n)
            rhs = rotation_matrix(rmap, n - m)
            assert np.abs(lhs - rhs).max() < 1e-10

    def test_norm_preserved(self):
        rmap = RotaryMap(dim=32)
        rng = np.random.default_rng(43)
        v = rng.normal(size=(10, 32))
        m = rng.integers(-100, 100, size=10)
        assert np.abs(np.linalg.norm(rotate(v, m, rmap), axis=-1)
                      - np.linalg.norm(v, axis=-1)).max() < 1e-9

    def test_relative_distance_property(self):
        # dot products of rotated vectors depend only on the position difference
        rmap = RotaryMap(dim=12)
        rng = np.random.default_rng(47)
        for _ in range(20):
            v, w = rng.normal(size=(2, 12))
            m, n, c = rng.integers(-40, 40, size=3)
            base = rotate(v, m, rmap) @ rotate(w, n, rmap)
            direct = v @ rotate(w, n - m, rmap)
            shifted = rotate(v, m + c, rmap) @ rotate(w, n + c, rmap)
            assert abs(base - direct) < 1e-10
            assert abs(base - shifted) < 1e-9


def test_structure_dump_shapes(phone_thread):
    dump = structure_dump(phone_thread)
    n = phone_thread.n_tokens
    assert dump["n"] == n
    assert len(dump["delta"]) == n and len(dump["delta"][0]) == n
    assert set(dump["masks"]) == {"th", "sp", "rp"}
    assert len(dump["local_positions"]) == n
