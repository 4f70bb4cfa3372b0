import pytest

from vnfmig import config as cfgmod
from vnfmig.simlab import ConfigurationError


def test_defaults_build_full_scale():
    v = cfgmod.load()
    sc = cfgmod.sim_config(v)
    assert (sc.population, sc.evaluation_steps, sc.ec_radius, sc.region_side) == (1000, 4000, 2000, 8000)
    assert sc.econ.interval_T == 30


def test_precedence(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[sim]\npopulation = 77\nevaluation_steps = 300\n[econ]\ncost_nf = 4\n")
    v = cfgmod.load(path, desk_scale=True, overrides=["econ.cost_nf=6"])
    assert v["sim.population"] == 77          # file beats preset
    assert v["sim.evaluation_steps"] == 300
    assert v["econ.cost_nf"] == 6              # override beats file
    assert cfgmod.load(desk_scale=True)["sim.population"] == 200


def test_nested_sections(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[sim.ec]\nradius = 1500\ncenter_x = 3000\n")
    sc = cfgmod.sim_config(cfgmod.load(path))
    assert sc.ec_radius == 1500 and sc.ec_center == (3000.0, 4000.0)


def test_unknown_and_bad_keys(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[sim]\npopulaton = 10\n")
    with pytest.raises(ConfigurationError):
        cfgmod.load(path)
    with pytest.raises(ConfigurationError):
        cfgmod.load(overrides=["sim.population=lots"])
    with pytest.raises(ConfigurationError):
        cfgmod.load(overrides=["novalue"])
    with pytest.raises(ConfigurationError):
        cfgmod.sim_config(cfgmod.load(overrides=["outage.matrix=0.5,0.5;1,0,0"]))
    with pytest.raises(ConfigurationError):
        cfgmod.sim_config(cfgmod.load(overrides=["econ.cost_sp=-1"]))


def test_dump_round_trip(tmp_path):
    v = cfgmod.load(overrides=["benchmark.P_o_grid=0.2,0.4", "sim.finetune_in_run=false"])
    path = tmp_path / "c.ini"
    path.write_text(cfgmod.dump(v))
    assert cfgmod.load(path) == v


def test_help_lists_every_key():
    text = cfgmod.help_text()
    for k in cfgmod.KEYS:
        assert k.name in text
