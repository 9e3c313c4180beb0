import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinebound import config
from spinebound.config import RunConfig
from spinebound.exceptions import ConfigError
from spinebound.learner import VelocityTrackingEnv


def test_defaults_are_valid():
    cfg = config.load()
    assert cfg == RunConfig()
    assert cfg.substeps == 6
    assert cfg.ppo_config().n_envs == 30


@given(
    seed=st.integers(0, 2**31),
    v_des=st.floats(0.1, 3.0),
    n_envs=st.integers(1, 64),
    lr=st.floats(1e-6, 1e-2),
    hidden=st.lists(st.integers(1, 256), min_size=1, max_size=3),
    mode=st.sampled_from(["active", "rigid"]),
    speeds=st.lists(st.floats(0.1, 3.0), max_size=5),
)
def test_round_trip(seed, v_des, n_envs, lr, hidden, mode, speeds):
    cfg = config.load(None, [f"seed={seed}", f"reward.v_des={v_des!r}", f"ppo.n_envs={n_envs}",
                             f"ppo.learning_rate={lr!r}", f"ppo.hidden={hidden}", f"mode={mode}",
                             f"compare.speeds={speeds}"])
    back = config.loads(config.dumps(cfg))
    assert back == cfg
    assert back.hash() == cfg.hash()


def test_shipped_configs_load():
    for name in ("desk_scale", "full_scale", "toy"):
        cfg = config.load(f"configs/{name}.yaml")
        assert config.loads(cfg.to_yaml()) == cfg
    assert config.load("configs/toy.yaml").env == "toy"


def test_hash_ignores_bookkeeping_fields():
    base = RunConfig()
    same = base.with_overrides(["seed=9", "output=elsewhere", "eval.trials=1", "logging.print_every=1",
                                "ppo.max_total_steps=5"])
    assert same.hash() == base.hash()
    assert base.with_overrides(["reward.v_des=1.5"]).hash() != base.hash()
    assert base.with_overrides(["mode=rigid"]).hash() != base.hash()
    assert len(base.hash()) == 16


@pytest.mark.parametrize("override,field", [
    ("ppo.clip_epsilon=1.5", "ppo.clip_epsilon"),
    ("ppo.horizon=0", "ppo.horizon"),
    ("ppo.horizon=lots", "ppo.horizon"),
    ("physics.control_dt=0.001", "physics.control_dt"),
    ("mode=floppy", "mode"),
    ("reward.sigma=-1", "reward"),
    ("ppo.no_such_key=1", "ppo.no_such_key"),
    ("compare.speeds=[1, x]", "compare.speeds"),
])
def test_invalid_values_name_the_field(override, field):
    with pytest.raises(ConfigError) as info:
        config.load(None, [override])
    assert info.value.field == field


def test_malformed_override_and_file():
    with pytest.raises(ConfigError):
        config.load(None, ["no-equals-sign"])
    with pytest.raises(ConfigError) as info:
        config.loads("ppo: [1, 2")
    assert info.value.field == "<file>"
    with pytest.raises(ConfigError) as info:
        config.loads("ppo: 3")
    assert info.value.field == "ppo"
    with pytest.raises(ConfigError):
        config.load("does/not/exist.yaml")


def test_override_values_parse_as_yaml():
    cfg = config.load(None, ["ppo.hidden=[32, 16]", "ppo.max_grad_norm=0.5", "compare.modes=[rigid]"])
    assert cfg.ppo.hidden == [32, 16] and cfg.ppo.max_grad_norm == 0.5
    assert cfg.compare.modes == ["rigid"]
    assert cfg.ppo_config().hidden == (32, 16)


def test_env_factory_builds_requested_env():
    env = config.load("configs/toy.yaml").env_factory()(0, 1)
    assert isinstance(env, VelocityTrackingEnv)
    robot = RunConfig().with_overrides(["mode=rigid", "reward.v_des=1.5"]).make_env(0)
    assert robot.mode == "rigid" and robot.reward_cfg.v_des == 1.5


def test_exponent_literals_without_dot():
    cfg = config.loads("ppo:\n  learning_rate: 3e-4\n  max_total_steps: 1e6\n")
    assert cfg.ppo.learning_rate == 3e-4 and cfg.ppo.max_total_steps == 1_000_000
    with pytest.raises(ConfigError):
        config.loads("ppo:\n  max_total_steps: 1.5e0\n")
