"""Flat key = value config parsing, precedence, and typed views."""

import pytest

from lesionfuse.config import ConfigError, RunConfig, load_config, parse_config_text
from lesionfuse.models import KIND_DENSENET, KIND_INCEPTION


class TestParse:
    def test_comments_blanks_and_spacing(self):
        text = "\n".join(
            [
                "# a comment",
                "",
                "seed = 9",
                "  epochs=3",
                "out_dir =  runs/x ",
                "# threshold = 0.9 (ignored)",
            ]
        )
        values = parse_config_text(text)
        assert values == {"seed": 9, "epochs": 3, "out_dir": "runs/x"}

    def test_unknown_key_with_line(self):
        with pytest.raises(ConfigError, match="line 2: unknown key 'learning_rat'"):
            parse_config_text("seed = 1\nlearning_rat = 0.1\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate key 'seed'"):
            parse_config_text("seed = 1\nseed = 2\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("just some words\n")

    def test_type_conversion_errors(self):
        with pytest.raises(ConfigError, match="'seed' expects a number"):
            parse_config_text("seed = soon\n")
        with pytest.raises(ConfigError, match="'threshold' expects a number"):
            parse_config_text("threshold = half\n")


class TestPrecedence:
    def test_defaults_then_file_then_flags(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 5\nepochs = 7\n")
        config = load_config(path, overrides={"seed": 11})
        assert config.seed == 11  # flag wins
        assert config.epochs == 7  # file wins over default
        assert config.batch_size == 32  # untouched default

    def test_none_overrides_are_skipped(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 5\n")
        config = load_config(path, overrides={"seed": None, "arch": None})
        assert config.seed == 5
        assert config.arch == "inception"

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")

    def test_fully_defaulted_is_valid(self):
        config = load_config()
        assert config == RunConfig()


class TestValidation:
    def test_bad_enum_values(self):
        for overrides, message in [
            ({"arch": "resnet"}, "arch"),
            ({"loss": "hinge"}, "loss"),
            ({"smoothing": "gaussian"}, "smoothing"),
        ]:
            with pytest.raises(ConfigError, match=message):
                load_config(overrides=overrides)

    def test_bounds(self):
        for overrides in [
            {"threshold": 0.0},
            {"threshold": 1.0},
            {"test_fraction": 1.5},
            {"val_fraction": 0.0},
            {"epochs": 0},
            {"batch_size": 0},
            {"sweep_step": 0.7},
            {"demo_samples": 5},
        ]:
            with pytest.raises(ConfigError):
                load_config(overrides=overrides)

    def test_bad_weights_strings(self):
        for weights in ["0.5", "0.5,0.4,0.1", "a,b", "-1,2", "0,0"]:
            with pytest.raises(ConfigError):
                load_config(overrides={"weights": weights})


class TestTypedViews:
    def test_split_and_train_configs_carry_seed(self):
        config = load_config(overrides={"seed": 3})
        assert config.split_config().seed == 3
        assert config.train_config().seed == 3
        assert config.train_config().batch_size == 32
        assert config.split_config().test_fraction == 0.20

    def test_default_model_specs(self):
        config = load_config()
        assert config.model_spec("inception").kind == KIND_INCEPTION
        assert config.model_spec("densenet").kind == KIND_DENSENET
        assert config.model_spec().kind == KIND_INCEPTION  # follows arch default

    def test_softmax_loss_switches_output_units(self):
        config = load_config(overrides={"loss": "softmax"})
        assert config.model_spec("inception").output_units == 2
        assert config.model_spec("densenet").output_units == 2
        assert load_config().model_spec("densenet").output_units == 1

    def test_custom_spec_text_round_trip(self):
        base = RunConfig().model_spec("densenet")
        config = load_config(overrides={"densenet_spec": base.to_text()})
        assert config.model_spec("densenet") == base

    def test_custom_spec_kind_mismatch(self):
        densenet_text = RunConfig().model_spec("densenet").to_text()
        with pytest.raises(ConfigError, match="declares kind"):
            load_config(overrides={"inception_spec": densenet_text}).model_spec("inception")

    def test_malformed_spec_text(self):
        with pytest.raises(ConfigError, match="bad densenet_spec"):
            load_config(overrides={"densenet_spec": "kind=???"}).model_spec("densenet")

    def test_fusion_weights_normalized(self):
        config = load_config(overrides={"weights": "1,3"})
        assert config.fusion_weights().values == (0.25, 0.75)
        assert load_config().fusion_weights().values == (0.45, 0.55)
