from typing_extensions import override

from exprec.experience_store import Experience, ExperienceStore, build_feature, compute_disturbance
from exprec.runtime.agent import Action
from exprec.runtime.environment import Observation
from exprec.runtime.subscriber import Subscriber


class ExperienceSubscriber(Subscriber):
    """Turns every control step into an experience of the live run and seals the run at the end."""

    def __init__(self, store: ExperienceStore, run_id: int, dt: float):
        self.store = store
        self.run_id = run_id
        self.dt = dt

    @override
    def on_episode_start(self) -> None:
        pass

    @override
    def on_step(self, observation: Observation, action: Action, next_observation: Observation) -> None:
        cmd = action["command"]
        g_hat = compute_disturbance(observation["state"].array, cmd.array, next_observation["state"].array, self.dt)
        self.store.record(
            Experience(
                run=self.run_id,
                vertex=observation["vertex"],
                t=observation["t"],
                a=build_feature(cmd.v_cmd, cmd.omega_cmd, observation["curvature"]),
                g_hat=g_hat,
            )
        )

    @override
    def on_episode_end(self) -> None:
        self.store.seal(self.run_id)
