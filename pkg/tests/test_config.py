"""Experiment configuration files."""

import math

import pytest

from cervreg import pipeline
from cervreg.config import ConfigError, load, parse


class TestParse:
    def test_sections_and_values(self):
        conf = parse("# top\n[a]\nx = 1\ny = hello world  # trailing\n[a.b]\nz = 1, 2 ,3\n")
        assert conf.get_int("a", "x") == 1
        assert conf.get_str("a", "y") == "hello world"
        assert conf.get_list("a.b", "z", int) == [1, 2, 3]
        assert conf.keys("a") == ["x", "y"]
        assert conf.has("a.b") and not conf.has("a", "z")

    def test_defaults(self):
        conf = parse("[a]\nx = 2.5\n")
        assert conf.get_float("a", "x", 1.0) == 2.5
        assert conf.get_float("a", "missing", 1.0) == 1.0
        assert conf.get_pair("b", "p", float, (1.0, 2.0)) == (1.0, 2.0)

    def test_missing_key(self):
        with pytest.raises(ConfigError, match="missing key 'x'"):
            parse("[a]\n").get_int("a", "x")

    @pytest.mark.parametrize("text,line,col,msg", [
        ("[a]\nx = 1\n[a b]\n", 3, 1, "malformed section"),
        ("[a]\nx = 1\nx = 2\n", 3, 1, "duplicate key"),
        ("[a]\n[a]\n", 2, 1, "duplicate section"),
        ("x = 1\n", 1, 1, "outside of any section"),
        ("[a]\n  just words\n", 2, 3, "expected 'key = value'"),
        ("[a]\nx =\n", 2, 4, "empty value"),
        ("[a]\nbad key = 1\n", 2, 1, "invalid key"),
    ])
    def test_syntax_errors(self, text, line, col, msg):
        with pytest.raises(ConfigError, match=msg) as err:
            parse(text, "t.ini")
        assert (err.value.line, err.value.col) == (line, col)
        assert str(err.value).startswith(f"t.ini:{line}:{col}: ")

    def test_type_error_position(self):
        conf = parse("[a]\nn   =  twelve\nl = 1, x, 3\n", "t.ini")
        with pytest.raises(ConfigError) as err:
            conf.get_int("a", "n")
        assert (err.value.line, err.value.col) == (2, 8)
        with pytest.raises(ConfigError) as err:
            conf.get_list("a", "l", int)
        assert (err.value.line, err.value.col) == (3, 8)

    def test_pair_length(self):
        with pytest.raises(ConfigError, match="two"):
            parse("[a]\np = 1, 2, 3\n").get_pair("a", "p")

    def test_load(self, tmp_path):
        (tmp_path / "c.ini").write_text("[s]\nk = v\n")
        conf = load(tmp_path / "c.ini")
        assert conf.get_str("s", "k") == "v" and conf.source.endswith("c.ini")


class TestExperimentConfig:
    def test_packaged_default(self):
        cfg = pipeline.load_experiment_config()
        assert (cfg.subjects, cfg.per_subject) == (14, 6)
        assert cfg.nets == ("full", "reduced", "filters16")
        assert cfg.variants == ("original", "pca_q8")
        assert cfg.train_cfg.gamma == 0.001 and cfg.train_cfg.epochs == 300
        assert cfg.reference.a == 22 and cfg.reference.phi == 0
        assert cfg.half_width == 8 and cfg.pca_q == 8

    def test_overrides(self):
        cfg = pipeline.experiment_config(parse(
            "[train]\nepochs = 5\n[train.reduced.pca_q8]\nlearning_rate = 0.01\n"
            "[reference]\nphi_deg = 10\n"))
        t = cfg.train_config("reduced", "pca_q8", 3)
        assert (t.epochs, t.learning_rate, t.seed, t.image_variant) == (5, 0.01, 3, "pca_q8")
        assert cfg.train_config("full", "pca_q8", 3).learning_rate == 1e-4
        assert cfg.reference.phi == pytest.approx(math.radians(10))

    @pytest.mark.parametrize("text,msg", [
        ("[train]\nepoch = 3\n", "unknown training key"),
        ("[train.big.original]\nepochs = 3\n", r"\[train.<net>.<variant>\]"),
        ("[experiment]\nnets = full, huge\n", "unknown net"),
        ("[experiment]\nvariants = pca\n", "unknown variant"),
        ("[experiment]\ndelta_i_source = both\n", "moving"),
        ("[data]\nsubjects = 0\n", "subjects must be"),
        ("[train]\nsplit = 1.5\n", "split"),
    ])
    def test_invalid(self, text, msg):
        with pytest.raises(ConfigError, match=msg):
            pipeline.experiment_config(parse(text))
