import math

import pytest

from underbag.config import (BernoulliScheme, BiasMode, DeltaScheme,
                             PoissonScheme, make_bootstrap_config,
                             make_subsampling_config, make_weighting_config)
from underbag.errors import ConfigurationError


def test_subsampling_defaults_balanced():
    cfg = make_subsampling_config(0.05, 0.05, 0.5625, 0.1, k=1)
    assert cfg.coeff_plus == DeltaScheme(1.0)
    assert cfg.coeff_minus == BernoulliScheme(1.0)
    assert cfg.bias == BiasMode.fixed(0.0)


def test_subsampling_default_rate_is_class_ratio():
    cfg = make_subsampling_config(0.05, 0.20, 0.5625, 0.1)
    assert cfg.coeff_minus == BernoulliScheme(0.25)
    assert cfg.bias.mode == "fixed" and cfg.bias.value == 0.0
    assert cfg.ensemble_k == math.inf


def test_subsampling_rejects_majority_positives():
    with pytest.raises(ConfigurationError):
        make_subsampling_config(0.2, 0.1, 0.5625, 0.1)


def test_bootstrap_construction():
    cfg = make_bootstrap_config(0.05, 0.20, 0.5625, 0.1, mu=0.25)
    assert cfg.coeff_minus == PoissonScheme(0.25)
    assert cfg.bias.estimated
    cfg1 = make_bootstrap_config(0.05, 0.05, 0.5625, 0.1, mu=1.0)
    assert cfg1.coeff_minus.mu == 1.0


def test_bootstrap_rejects_bad_rate():
    with pytest.raises(ConfigurationError):
        make_bootstrap_config(0.05, 0.20, 0.5625, 0.1, mu=0.0)
    with pytest.raises(ConfigurationError):
        make_bootstrap_config(0.05, 0.20, 0.5625, 0.1, mu=1.5)


def test_weighting_naive_coefficients_example():
    # (alpha+ + alpha-) / (2 alpha+-) at (0.05, 0.20)
    cfg = make_weighting_config(0.05, 0.20, 0.5625, 0.1, 2.5, 0.625)
    assert cfg.coeff_plus.gamma == 2.5
    assert cfg.coeff_minus.gamma == 0.625
    assert cfg.bias.estimated
    assert cfg.deterministic_coeffs


def test_weighting_identity_weights():
    cfg = make_weighting_config(0.1, 0.1, 1.0, 0.5, 1.0, 1.0)
    assert cfg.coeff_plus.gamma == cfg.coeff_minus.gamma == 1.0


def test_weighting_rejects_nonpositive_gamma():
    with pytest.raises(ConfigurationError):
        make_weighting_config(0.05, 0.20, 0.5625, 0.1, 0.0, 0.625)


@pytest.mark.parametrize("scheme,mean,var", [
    (DeltaScheme(2.5), 2.5, 0.0),
    (DeltaScheme(0.0), 0.0, 0.0),
    (BernoulliScheme(0.25), 0.25, 0.1875),
    (PoissonScheme(0.25), 0.25, 0.25),
    (PoissonScheme(1.0), 1.0, 1.0),
])
def test_scheme_moments(scheme, mean, var):
    assert scheme.mean() == pytest.approx(mean, abs=0)
    assert scheme.variance() == pytest.approx(var, abs=1e-15)


def test_invalid_domain_rejected():
    with pytest.raises(ConfigurationError):
        make_subsampling_config(0.05, 0.20, -1.0, 0.1)
    with pytest.raises(ConfigurationError):
        make_subsampling_config(0.05, 0.20, 0.5625, 0.0)
    with pytest.raises(ConfigurationError):
        BernoulliScheme(0.0)
    with pytest.raises(ConfigurationError):
        DeltaScheme(-0.5)


def test_config_k_validation():
    with pytest.raises(ConfigurationError):
        make_subsampling_config(0.05, 0.20, 0.5625, 0.1, k=0)
    cfg = make_subsampling_config(0.05, 0.20, 0.5625, 0.1, k=4)
    assert cfg.ensemble_k == 4


def test_config_file_roundtrip(tmp_path):
    from underbag.io import (build_problem_config, config_to_dict,
                             parse_config_file, write_config_file)

    for cfg in (
        make_subsampling_config(0.05, 0.20, 0.5625, 0.1, k=4),
        make_bootstrap_config(0.05, 0.20, 0.5625, 0.1, mu=0.3),
        make_weighting_config(0.05, 0.20, 0.5625, 0.1, 2.5, 0.625),
    ):
        path = tmp_path / "case.cfg"
        write_config_file(cfg, path)
        again = build_problem_config(parse_config_file(path))
        assert again == cfg
        assert config_to_dict(again) == config_to_dict(cfg)


def test_config_file_rejects_unknown_keys(tmp_path):
    from underbag.io import build_problem_config

    with pytest.raises(ConfigurationError, match="unknown config keys"):
        build_problem_config({"alpha_plus": "0.05", "alpha_minus": "0.2",
                              "delta": "1", "lambda": "0.1",
                              "scheme": "subsample", "bogus": "1"})
