import json

import numpy as np
import pytest
import torch
from transformers import AutoModel, AutoTokenizer

from dqembed.cli import main
from dqembed.dqem import FormatError, read_embedding_file, write_embedding_file
from dqembed.export import AlignmentError, export_corpus, verify


class TestFileFormat:
    def test_write_read_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        items = [("a", rng.normal(size=(3, 8)).astype(np.float32)),
                 ("b", rng.normal(size=(5, 8)).astype(np.float32))]
        path = tmp_path / "e.dqem"
        write_embedding_file(path, 8, items)
        dim, loaded = read_embedding_file(path)
        assert dim == 8
        for doc_id, rows in items:
            assert loaded[doc_id].tobytes() == rows.tobytes()

    def test_truncation_names_dialogue(self, tmp_path):
        path = tmp_path / "e.dqem"
        write_embedding_file(path, 4, [("a", np.zeros((2, 4), np.float32)),
                                       ("b", np.zeros((2, 4), np.float32))])
        (tmp_path / "cut.dqem").write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError, match="unexpected end of file at dialogue 1"):
            read_embedding_file(tmp_path / "cut.dqem")


class TestExport:
    def test_shapes_and_header(self, tmp_path, tiny_model_dir, unit_corpus_path):
        out = tmp_path / "emb.dqem"
        count = export_corpus(unit_corpus_path, tiny_model_dir, out)
        assert count == 2
        dim, rows = read_embedding_file(out)
        assert dim == 32
        assert rows["u1"].shape == (9, 32)   # 6 + 3 corpus tokens
        assert rows["u2"].shape == (4, 32)
        assert rows["u1"].dtype == np.dtype("<f4")

    def test_mean_pooling_of_split_token(self, tmp_path, tiny_model_dir,
                                         unit_corpus_path):
        # "processor" -> pro ##ces ##sor: its row is the mean of the three
        # subword vectors of the first utterance's encoding
        out = tmp_path / "emb.dqem"
        export_corpus(unit_corpus_path, tiny_model_dir, out)
        _, rows = read_embedding_file(out)
        tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
        model = AutoModel.from_pretrained(tiny_model_dir)
        model.eval()
        assert tokenizer.tokenize("processor") == ["pro", "##ces", "##sor"]
        ids = tokenizer.convert_tokens_to_ids(
            ["[CLS]", "the", "alpha", "pro", "##ces", "##sor", "is", "great", ".",
             "[SEP]"])
        with torch.no_grad():
            hidden = model(input_ids=torch.tensor([ids])).last_hidden_state[0].numpy()
        expected = hidden[3:6].mean(axis=0).astype(np.float32)
        assert np.array_equal(rows["u1"][2], expected)

    def test_pooling_variants(self, tmp_path, tiny_model_dir, unit_corpus_path):
        outputs = {}
        for pooling in ("mean", "max", "first"):
            out = tmp_path / f"{pooling}.dqem"
            export_corpus(unit_corpus_path, tiny_model_dir, out, pooling=pooling)
            outputs[pooling] = read_embedding_file(out)[1]["u1"]
        split_row = 2  # the subword-split token differs across poolings
        assert not np.array_equal(outputs["mean"][split_row], outputs["max"][split_row])
        assert not np.array_equal(outputs["mean"][split_row], outputs["first"][split_row])
        whole_row = 0  # single-subword tokens pool identically
        assert np.array_equal(outputs["mean"][whole_row], outputs["first"][whole_row])

    def test_reexport_byte_identical(self, tmp_path, tiny_model_dir, unit_corpus_path):
        a, b = tmp_path / "a.dqem", tmp_path / "b.dqem"
        export_corpus(unit_corpus_path, tiny_model_dir, a)
        export_corpus(unit_corpus_path, tiny_model_dir, b)
        assert a.read_bytes() == b.read_bytes()

    def test_dim_argument_preflags_mismatch(self, tmp_path, tiny_model_dir,
                                            unit_corpus_path):
        with pytest.raises(FormatError, match="hidden size 32"):
            export_corpus(unit_corpus_path, tiny_model_dir, tmp_path / "e.dqem",
                          expected_dim=64)


class TestAlignment:
    def zwsp_corpus(self, tmp_path, stand_in):
        records = [{"doc_id": "z", "sentences": [["the", stand_in, "great"]],
                    "replies": [-1], "speakers": [0]}]
        path = tmp_path / f"z_{ord(stand_in[0]):x}.json"
        path.write_text(json.dumps(records), encoding="utf-8")
        return str(path)

    def test_zero_subword_falls_back_to_unknown(self, tmp_path, tiny_model_dir,
                                                caplog):
        # a zero-width space dissolves during tokenization; an out-of-vocabulary
        # word becomes the unknown subword; both must encode identically
        import logging
        ghost = self.zwsp_corpus(tmp_path, "​")
        oov = self.zwsp_corpus(tmp_path, "xyzzy")
        with caplog.at_level(logging.WARNING, logger="dqembed"):
            export_corpus(ghost, tiny_model_dir, tmp_path / "ghost.dqem")
        assert any("produced no subwords" in rec.message for rec in caplog.records)
        export_corpus(oov, tiny_model_dir, tmp_path / "oov.dqem")
        _, ghost_rows = read_embedding_file(tmp_path / "ghost.dqem")
        _, oov_rows = read_embedding_file(tmp_path / "oov.dqem")
        assert np.array_equal(ghost_rows["z"], oov_rows["z"])

    def test_strict_mode_reports_token_and_position(self, tmp_path, tiny_model_dir):
        ghost = self.zwsp_corpus(tmp_path, "​")
        with pytest.raises(AlignmentError, match="utterance 0 token 1"):
            export_corpus(ghost, tiny_model_dir, tmp_path / "g.dqem", strict=True)

    def test_over_long_utterance_rejected(self, tmp_path, tiny_model_dir):
        records = [{"doc_id": "long", "sentences": [["the"] * 60],
                    "replies": [-1], "speakers": [0]}]
        path = tmp_path / "long.json"
        path.write_text(json.dumps(records))
        with pytest.raises(AlignmentError, match="positions"):
            export_corpus(path, tiny_model_dir, tmp_path / "l.dqem")


class TestVerify:
    def test_clean(self, tmp_path, tiny_model_dir, unit_corpus_path):
        out = tmp_path / "emb.dqem"
        export_corpus(unit_corpus_path, tiny_model_dir, out)
        assert verify(unit_corpus_path, out) == []
        assert verify(unit_corpus_path, out, expected_dim=32) == []

    def test_dim_mismatch_flagged(self, tmp_path, tiny_model_dir, unit_corpus_path):
        out = tmp_path / "emb.dqem"
        export_corpus(unit_corpus_path, tiny_model_dir, out)
        problems = verify(unit_corpus_path, out, expected_dim=768)
        assert any("dimension 32" in p for p in problems)

    def test_count_mismatch_flagged(self, tmp_path, unit_corpus_path):
        out = tmp_path / "emb.dqem"
        write_embedding_file(out, 8, [("u1", np.zeros((9, 8), np.float32)),
                                      ("u2", np.zeros((3, 8), np.float32))])
        problems = verify(unit_corpus_path, out)
        assert problems == ["u2: embedding file has 3 rows, corpus has 4 tokens"]

    def test_missing_and_extra(self, tmp_path, unit_corpus_path):
        out = tmp_path / "emb.dqem"
        write_embedding_file(out, 8, [("u1", np.zeros((9, 8), np.float32)),
                                      ("elsewhere", np.zeros((1, 8), np.float32))])
        problems = verify(unit_corpus_path, out)
        assert any("u2: missing" in p for p in problems)
        assert any("elsewhere" in p for p in problems)


class TestCli:
    def test_export_then_verify(self, tmp_path, tiny_model_dir, unit_corpus_path,
                                capsys):
        out = tmp_path / "emb.dqem"
        assert main(["export", "--corpus", unit_corpus_path, "--model",
                     tiny_model_dir, "--out", str(out)]) == 0
        assert main(["verify", "--corpus", unit_corpus_path, "--embeddings",
                     str(out)]) == 0
        assert "OK" in capsys.readouterr().out

    def test_verify_mismatch_exit_one(self, tmp_path, unit_corpus_path, capsys):
        out = tmp_path / "emb.dqem"
        write_embedding_file(out, 8, [("u1", np.zeros((1, 8), np.float32))])
        assert main(["verify", "--corpus", unit_corpus_path, "--embeddings",
                     str(out)]) == 1

    def test_missing_file_exit_two(self, tmp_path, capsys):
        assert main(["verify", "--corpus", "/nope.json", "--embeddings",
                     "/nope.dqem"]) == 2
