import json

import numpy as np
import pytest

from diaquad import synth
from diaquad.corpus import (CorpusError, PAD_ID, UNK_ID, Vocabulary, build_vocabulary,
                            corpus_stats, dumps_corpus, parse_dialogue, validate_corpus)


class TestParseDialogue:
    def test_reply_and_speaker_arrays(self, phone_thread):
        assert [u.reply_to for u in phone_thread.utterances] == [-1, 0, 1, 2, 0, 4, 0, 6]
        assert [u.speaker for u in phone_thread.utterances] == [0, 1, 2, 1, 3, 0, 3, 0]

    def test_global_indices_contiguous(self, phone_thread):
        indices = [t.global_index for t in phone_thread.tokens()]
        assert indices == list(range(phone_thread.n_tokens))

    def test_quad_resolution(self, phone_thread):
        quad = phone_thread.gold_quads[0]
        assert (quad.target.start, quad.target.end, quad.target.text) == (20, 21, "iPhone")
        assert (quad.aspect.start, quad.aspect.end, quad.aspect.text) == (24, 25, "processor")
        assert (quad.opinion.start, quad.opinion.end, quad.opinion.text) == (17, 18, "better")
        assert quad.polarity == "pos"

    def test_forward_reference_rejected(self, phone_thread_record):
        phone_thread_record["replies"][2] = 5
        with pytest.raises(CorpusError, match="reply cycle/forward reference"):
            parse_dialogue(phone_thread_record)

    def test_span_out_of_bounds(self, phone_thread_record):
        phone_thread_record["targets"][0] = [995, 996, "iPhone"]
        with pytest.raises(CorpusError, match=r"targets\[0\].*out of bounds"):
            parse_dialogue(phone_thread_record)

    def test_span_crossing_utterances(self, phone_thread_record):
        # utterance 0 covers tokens 0..28; a span into token 29 crosses.
        phone_thread_record["aspects"][0] = [28, 30, "x"]
        with pytest.raises(CorpusError, match="crosses an utterance boundary"):
            parse_dialogue(phone_thread_record)

    def test_bad_polarity(self, phone_thread_record):
        phone_thread_record["quadruples"][0][6] = "positive"
        with pytest.raises(CorpusError, match="polarity"):
            parse_dialogue(phone_thread_record)

    def test_misaligned_speakers(self, phone_thread_record):
        phone_thread_record["speakers"] = phone_thread_record["speakers"][:-1]
        with pytest.raises(CorpusError, match="speakers"):
            parse_dialogue(phone_thread_record)

    def test_error_carries_doc_id_and_path(self, phone_thread_record):
        phone_thread_record["opinions"][3] = [5, 5, "x"]
        with pytest.raises(CorpusError) as err:
            parse_dialogue(phone_thread_record)
        assert "0002" in str(err.value)
        assert "opinions[3]" in str(err.value)

    def test_triplets_key_alias(self, phone_thread_record):
        phone_thread_record["triplets"] = phone_thread_record.pop("quadruples")
        assert len(parse_dialogue(phone_thread_record).gold_quads) == 11


class TestValidation:
    def test_clean_fixtures(self, phone_thread, sample5):
        assert validate_corpus([phone_thread, *sample5]).is_clean

    def test_two_roots_flagged(self, phone_thread_record):
        phone_thread_record["replies"][4] = -1
        report = validate_corpus([parse_dialogue(phone_thread_record)])
        assert [v.message for v in report.violations] == \
            ["reply links must form a single tree, found 2 roots"]

    def test_span_text_mismatch(self, phone_thread_record):
        phone_thread_record["targets"][0][2] = "iPad"
        report = validate_corpus([parse_dialogue(phone_thread_record)])
        assert len(report.violations) == 1
        assert "does not match covered tokens" in report.violations[0].message

    def test_quad_span_missing_from_list(self, phone_thread_record):
        del phone_thread_record["targets"][0]
        report = validate_corpus([parse_dialogue(phone_thread_record)])
        assert any("missing from the target list" in v.message for v in report.violations)

    def test_concatenated_text_accepted(self):
        # character-tokenized languages join spans without spaces
        record = {"doc_id": "zh", "sentences": [["好", "手", "机"]], "replies": [-1],
                  "speakers": [0], "targets": [[1, 3, "手机"]], "aspects": [],
                  "opinions": [], "quadruples": []}
        assert validate_corpus([parse_dialogue(record)]).is_clean


class TestStats:
    def test_sample5_hand_counts(self, sample5):
        stats = corpus_stats(sample5)
        assert stats.to_dict() == {
            "dialogues": 5, "utterances": 13, "speakers": 10,
            "targets": 7, "aspects": 9, "opinions": 12,
            "pairs_ta": 10, "pairs_to": 12, "pairs_ao": 12,
            "quads": 12, "intra": 6, "cross": 6,
        }

    def test_single_dialogue_intra(self, sample5):
        stats = corpus_stats([sample5[0]])
        assert (stats.intra, stats.cross) == (1, 0)

    def test_permutation_invariance(self, sample5):
        forward = corpus_stats(sample5)
        assert corpus_stats(list(reversed(sample5))).to_dict() == forward.to_dict()

    def test_projected_pairs_do_not_exceed_quads(self):
        rng = np.random.default_rng(11)
        for d in synth.random_corpus(rng, 25, n_quads=3):
            stats = corpus_stats([d])
            assert stats.pairs_ta <= stats.quads
            assert stats.pairs_to <= stats.quads
            assert stats.pairs_ao <= stats.quads

    def test_table_layout(self, sample5):
        text = corpus_stats(sample5).to_text()
        head, row = text.strip().split("\n")
        assert head.split() == ["Dia.", "Utt.", "Spk.", "Tgt.", "Asp.", "Opi.",
                                "Pair_ta", "Pair_to", "Pair_ao", "Quad.",
                                "Intra.", "Cross."]
        assert row.split() == ["5", "13", "10", "7", "9", "12", "10", "12", "12",
                               "12", "6", "6"]


class TestSerialization:
    def test_roundtrip_byte_stable(self, phone_thread, sample5):
        first = dumps_corpus([phone_thread, *sample5])
        reparsed = [parse_dialogue(r) for r in json.loads(first)]
        assert dumps_corpus(reparsed) == first

    def test_random_dialogues_roundtrip(self):
        rng = np.random.default_rng(3)
        corpus = synth.random_corpus(rng, 20)
        first = dumps_corpus(corpus)
        assert dumps_corpus([parse_dialogue(r) for r in json.loads(first)]) == first


class TestVocabulary:
    def test_reserved_ids_and_order(self):
        record = {"doc_id": "v", "sentences": [["a", "b", "a"]], "replies": [-1],
                  "speakers": [0]}
        vocab = build_vocabulary([parse_dialogue(record)])
        assert vocab.encode(["a", "b"]) == [2, 3]
        assert vocab.id_of("a") == 2  # most frequent first
        assert (PAD_ID, UNK_ID) == (0, 1)

    def test_unknown_maps_to_unk(self, sample5):
        vocab = build_vocabulary(sample5)
        assert vocab.id_of("neverseen") == UNK_ID

    def test_frequency_then_lexicographic(self):
        record = {"doc_id": "v", "sentences": [["z", "z", "m", "b", "m"]],
                  "replies": [-1], "speakers": [0]}
        vocab = build_vocabulary([parse_dialogue(record)])
        # z and m both occur twice -> lexicographic; b once -> last
        assert vocab.encode(["m", "z", "b"]) == [2, 3, 4]

    def test_deterministic_bytes(self, sample5):
        a = build_vocabulary(sample5).to_json()
        b = build_vocabulary([parse_dialogue(r) for r in
                              json.loads(dumps_corpus(sample5))]).to_json()
        assert a == b

    def test_save_load(self, tmp_path, sample5):
        vocab = build_vocabulary(sample5)
        vocab.save(tmp_path / "vocab.json")
        assert Vocabulary.load(tmp_path / "vocab.json") == vocab

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            build_vocabulary([])


def test_bundled_overfit_corpus_matches_generator():
    from diaquad.corpus import bundled_corpus_path, dumps_corpus, load_corpus
    bundled = load_corpus(bundled_corpus_path("overfit8.json"))
    assert dumps_corpus(bundled) == dumps_corpus(synth.make_overfit_corpus(8))
