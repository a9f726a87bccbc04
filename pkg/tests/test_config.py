import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from colldiff import config
from colldiff.errors import ConfigError


def test_minimal_config_resolves():
    cfg = config.parse_config_text("[target]\npreset = two_atoms_d2\n[sampler]\neps_err = 1e-4\n")
    assert cfg.target.preset == "two_atoms_d2"
    assert cfg.sampler.eps_err == 1e-4
    tgt = cfg.build_target()
    assert tgt.d == 2 and tgt.base.n == 2


def test_empty_text_uses_default_preset():
    cfg = config.parse_config_text("")
    assert np.array_equal(cfg.build_target().base.atoms, config.PRESETS[config.DEFAULT_PRESET][0])


def test_negative_sigma_names_field():
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text("[target]\nsigma = -1\n")
    assert ei.value.field == "sigma"
    assert "sigma" in str(ei.value)


def test_unknown_key_has_line():
    text = "[sampler]\neps_err = 0.01\nbogus = 3\n"
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text(text)
    assert ei.value.field == "bogus" and ei.value.line == 3


def test_unknown_section_has_line():
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text("# c\n\n[extra]\nx = 1\n")
    assert ei.value.line == 3


def test_parse_error_line():
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text("[run]\nseed = 1\nthis line has no equals\n")
    assert ei.value.line == 3
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text("seed = 1\n")
    assert ei.value.line == 1
    with pytest.raises(ConfigError):
        config.parse_config_text("[run]\nseed = 1\nseed = 2\n")


def test_bad_value_types():
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text("[run]\nn_samples = 2.5\n")
    assert ei.value.field == "n_samples"
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text("[corrector]\nenabled = maybe\n")
    assert ei.value.field == "enabled"


@pytest.mark.parametrize("text,fieldname", [
    ("[sampler]\neps_err = 1.5", "eps_err"),
    ("[sampler]\noracle = magic", "oracle"),
    ("[sampler]\nh = -0.1", "h"),
    ("[target]\npreset = nope", "preset"),
    ("[target]\npreset = gaussian_d2\natoms_file = a.txt", "preset"),
    ("[run]\nthreads = -1", "threads"),
    ("[benchmark]\neuler_steps = 10, 0", "euler_steps"),
    ("[diagnose]\ngrid = 100", "grid"),
    ("[diagnose]\norders = 1, 5", "orders"),
    ("[diagnose]\noffsets = 0.5", "offsets"),
    ("[corrector]\neps = 2", "eps"),
])
def test_validation_names_field(text, fieldname):
    with pytest.raises(ConfigError) as ei:
        config.parse_config_text(text)
    assert ei.value.field == fieldname


def test_integer_float_spelling():
    cfg = config.parse_config_text("[benchmark]\nn_reference = 1e5\n[run]\nseed = 18446744073709551615\n")
    assert cfg.benchmark.n_reference == 100_000
    assert cfg.run.seed == 2**64 - 1


def test_round_trip_defaults_and_custom():
    for text in ("", "[sampler]\neps_err = 0.001\nh = 0.01\nk = 7\n[corrector]\nenabled = on\n"
                     "[benchmark]\neps_err_list = 0.1, 0.001\n[diagnose]\nk_list = 3\n"):
        cfg = config.parse_config_text(text)
        again = config.parse_config_text(config.format_config(cfg))
        assert again == cfg


@given(eps=st.floats(1e-12, 0.999), sigma=st.floats(1e-3, 1e3), seed=st.integers(0, 2**64 - 1),
       n=st.integers(1, 10**6), gamma=st.one_of(st.none(), st.floats(1e-3, 100)),
       ks=st.lists(st.integers(1, 30), min_size=1, max_size=5))
def test_round_trip_property(eps, sigma, seed, n, gamma, ks):
    cfg = config.ExperimentConfig(
        target=config.TargetConfig(preset="acceptance_gmm", sigma=sigma),
        sampler=config.SamplerConfig(eps_err=eps, gamma_const=gamma),
        run=config.RunConfig(n_samples=n, seed=seed),
        diagnose=config.DiagnoseConfig(k_list=tuple(ks)))
    assert config.parse_config_text(config.format_config(cfg)) == cfg


def test_overrides_only_set_fields():
    s = config.SamplerConfig(h=0.01, m=5)
    assert s.overrides() == {"h": 0.01, "m": 5}


def test_with_run_and_corrector():
    cfg = config.parse_config_text("")
    c2 = config.with_run(cfg, seed=5, out=None)
    assert c2.run.seed == 5 and c2.run.out == cfg.run.out
    assert config.with_corrector(cfg, None) is cfg
    assert config.with_corrector(cfg, True).corrector.enabled


def test_atoms_file(tmp_path):
    p = tmp_path / "atoms.txt"
    p.write_text("# two atoms in 3d\n1 2 3\n-1 -2 -3  # mirror\n\n")
    prior = config.read_atoms(p)
    assert prior.atoms.shape == (2, 3)
    cfgfile = tmp_path / "exp.ini"
    cfgfile.write_text("[target]\natoms_file = atoms.txt\nsigma = 0.5\n")
    tgt = config.parse_config(cfgfile).build_target()
    assert tgt.d == 3 and tgt.sigma == 0.5


def test_atoms_file_weights(tmp_path):
    p = tmp_path / "w.txt"
    p.write_text("# weights in last column\n0 0 1\n2 0 3\n")
    prior = config.read_atoms(p)
    assert prior.atoms.shape == (2, 2)
    assert np.allclose(prior.weights, [0.25, 0.75])


@pytest.mark.parametrize("body", ["", "1 2\n3\n", "1 x\n", "# weights\n1\n", "# weights\n1 -1\n"])
def test_atoms_file_errors(tmp_path, body):
    p = tmp_path / "bad.txt"
    p.write_text(body)
    with pytest.raises(ConfigError) as ei:
        config.read_atoms(p)
    assert ei.value.field == "atoms_file"


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        config.parse_config(tmp_path / "none.ini")
    with pytest.raises(ConfigError):
        config.read_atoms(tmp_path / "none.txt")


def test_defaults_are_frozen():
    cfg = config.parse_config_text("")
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.run.seed = 3
