from types import SimpleNamespace

import numpy as np
import pytest

from exprec import gp
from exprec.controller import PathTrackingMPC
from exprec.course import generate_path
from exprec.experience_store import ExperienceStore
from exprec.recommender import ControlGPChannel, PriorOnlyPolicy
from exprec.runtime import Agent, Runtime, Subscriber
from exprec.runtime.agents import MPCAgent
from exprec.utils import ExperienceSubscriber, RecommenderSubscriber, StepLogSubscriber
from exprec.utils.configurations import (
    BUILTIN_MODES,
    ControllerConfiguration,
    CourseConfiguration,
    GPConfiguration,
    ModeConfiguration,
    RecommenderConfiguration,
    Segment,
)
from exprec.utils.step_log_subscriber import STEP_COLUMNS
from exprec.vehicle import Command
from exprec.vehicle_environment import VehicleEnvironment

QUIET = ModeConfiguration("quiet", noise_std=[0.0, 0.0, 0.0])
HYPER = GPConfiguration().hyperparameters()


@pytest.fixture
def path():
    return generate_path(CourseConfiguration(segments=[Segment("straight", length=3.0)], closed=False))


class ConstantAgent(Agent):
    def __init__(self, command: Command, fault: bool = False):
        self.command = command
        self.fault = fault
        self.resets = 0

    def get_action(self, observation: dict) -> dict:
        return {"command": self.command, "solution": SimpleNamespace(fault=self.fault)}

    def reset(self) -> None:
        self.resets += 1


class RecordingSubscriber(Subscriber):
    def __init__(self):
        self.events = []

    def on_episode_start(self) -> None:
        self.events.append("start")

    def on_step(self, observation: dict, action: dict, next_observation: dict) -> None:
        self.events.append((observation["t"], next_observation["t"]))

    def on_episode_end(self) -> None:
        self.events.append("end")


def _environment(path, mode=QUIET, **kwargs):
    return VehicleEnvironment(path, mode, 0.1, np.random.default_rng(0), **kwargs)


def test_lap_completes(path):
    env = _environment(path)
    agent = ConstantAgent(Command(1.5, 0.0))
    recorder = RecordingSubscriber()
    runtime = Runtime(env, agent, [recorder])
    runtime.run()
    assert env.status == "complete"
    assert env.steps == 20
    assert runtime.episode_steps == 20
    assert agent.resets == 1
    assert recorder.events[0] == "start" and recorder.events[-1] == "end"
    assert recorder.events[1] == (0.0, 0.1)
    assert len(recorder.events) == 22


def test_runtime_step_cap_and_repeated_episodes(path):
    env = _environment(path)
    agent = ConstantAgent(Command(0.0, 0.0))
    recorder = RecordingSubscriber()
    runtime = Runtime(env, agent, [recorder], num_episodes=2, max_episode_steps=3)
    runtime.run()
    assert runtime.episode_steps == 3
    assert agent.resets == 2
    assert recorder.events.count("start") == 2 and recorder.events.count("end") == 2
    assert len(recorder.events) == 10


@pytest.mark.parametrize("kwargs", [{"max_hz": -1}, {"num_episodes": 0}, {"max_episode_steps": -2}])
def test_runtime_rejects_invalid_settings(path, kwargs):
    with pytest.raises(ValueError):
        Runtime(_environment(path), ConstantAgent(Command(0.0, 0.0)), [], **kwargs)


def test_divergence_aborts(path):
    env = _environment(path, divergence_limit=0.3)
    Runtime(env, ConstantAgent(Command(1.5, 1.5)), []).run()
    assert env.status == "diverged"
    assert env.is_episode_complete()


def test_timeout_aborts(path):
    env = _environment(path, max_steps=5)
    Runtime(env, ConstantAgent(Command(0.0, 0.0)), []).run()
    assert env.status == "timeout"
    assert env.steps == 5


def test_controller_fault_aborts(path):
    env = _environment(path)
    Runtime(env, ConstantAgent(Command(0.75, 0.0), fault=True), []).run()
    assert env.status == "fault"
    assert env.steps == 1


def test_mode_switch_mid_run(path):
    env = _environment(path, switch=(5, BUILTIN_MODES["altered"]))
    for _ in range(4):
        env.apply_action(ConstantAgent(Command(1.5, 0.0)).get_action(env.get_observation()))
    assert env.mode is QUIET
    env.apply_action(ConstantAgent(Command(1.5, 0.0)).get_action(env.get_observation()))
    assert env.mode.name == "altered"
    env.reset()
    assert env.mode is QUIET and env.t == 0.0


def test_observation_reports_tracking_error(path):
    env = _environment(path)
    obs = env.get_observation()
    assert obs["vertex"] == 0
    assert obs["lateral"] == 0.0
    assert obs["curvature"] == 0.0


def test_closed_loop_run_records_experiences(path, tmp_path):
    store = ExperienceStore(path)
    run = store.start_run("quiet")
    channel = ControlGPChannel(HYPER)
    policy = PriorOnlyPolicy(store.reader(), channel, RecommenderConfiguration(), np.random.default_rng(0))
    env = _environment(path, mode=BUILTIN_MODES["altered"], max_steps=60)
    step_log = StepLogSubscriber(0.1, tmp_path)
    recommendations = RecommenderSubscriber(policy, path, tmp_path)
    agent = MPCAgent(PathTrackingMPC(path, ControllerConfiguration()), channel)
    Runtime(env, agent, [ExperienceSubscriber(store, run, 0.1), recommendations, step_log]).run()

    assert env.status == "complete"
    view = store.view(run)
    assert len(view) == env.steps
    assert store.snapshot().live is None
    # Turning commands under the altered mode show up as turn-rate disturbance
    for e in view.experiences:
        assert e.g_hat.shape == (3,)
    assert len(step_log.rows) == env.steps
    assert len(step_log.predicted_rate_mean) == env.steps
    assert not hasattr(step_log, "speeds")
    assert all(len(mu) == ControllerConfiguration().horizon_steps for mu in step_log.predicted_rate_mean)
    # Prior-only policy keeps the control GP empty, so predictions carry the prior variance
    assert step_log.rows[0][STEP_COLUMNS.index("sigma_theta")] == pytest.approx(np.sqrt(HYPER[2].prior_variance))
    assert all(e.run_id is None for _, e in recommendations.events)

    header = (tmp_path / "steps.csv").read_text().splitlines()[0]
    assert header == ",".join(STEP_COLUMNS)
    assert (tmp_path / "recommendations.csv").exists()
    assert (tmp_path / "scores.csv").exists()


def test_prior_controller_holds_the_benchmark_course():
    course = generate_path(CourseConfiguration())
    env = _environment(course, max_steps=600)
    step_log = StepLogSubscriber(0.1)
    agent = MPCAgent(PathTrackingMPC(course, ControllerConfiguration()), ControlGPChannel(HYPER))
    Runtime(env, agent, [step_log]).run()

    assert env.status == "complete"
    assert len(step_log.rows) == env.steps
    assert np.max(np.abs(step_log.lateral)) < 0.15


def test_agent_reports_control_gp(path):
    channel = ControlGPChannel(HYPER)
    agent = MPCAgent(PathTrackingMPC(path, ControllerConfiguration()), channel)
    env = _environment(path)
    action = agent.get_action(env.get_observation())
    assert action["control_size"] == 0
    assert action["control_generation"] == 0
    assert action["stage_cost"] >= 0.0
    assert len(action["applied_prediction"]) == 3
    assert isinstance(action["applied_prediction"][0], gp.Prediction)
