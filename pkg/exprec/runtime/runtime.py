import logging
import time

from exprec.runtime import agent as _agent
from exprec.runtime import environment as _environment
from exprec.runtime import subscriber as _subscriber


class Runtime:
    """Drives the observe / act / notify loop of one or more runs.

    With `max_hz = 0` steps follow each other as fast as they compute, which is what the
    simulated vehicle wants; a positive rate paces the loop for hardware-in-the-loop use.
    """

    def __init__(
        self,
        environment: _environment.Environment,
        agent: _agent.Agent,
        subscribers: list[_subscriber.Subscriber],
        max_hz: float = 0,
        num_episodes: int = 1,
        max_episode_steps: int = 0,
        logger: logging.Logger = logging.getLogger(__name__),
    ) -> None:
        if max_hz < 0 or num_episodes < 1 or max_episode_steps < 0:
            raise ValueError(
                f"Invalid runtime settings: max_hz={max_hz}, num_episodes={num_episodes}, "
                f"max_episode_steps={max_episode_steps}"
            )
        self._environment = environment
        self._agent = agent
        self._subscribers = subscribers
        self._period = 1.0 / max_hz if max_hz > 0 else 0.0
        self._num_episodes = num_episodes
        self._max_episode_steps = max_episode_steps
        self._logger = logger
        self._episode_steps = 0

    @property
    def episode_steps(self) -> int:
        """Steps taken in the current (or last) episode."""
        return self._episode_steps

    def run(self) -> None:
        for episode in range(self._num_episodes):
            self._run_episode(episode)

    def _run_episode(self, episode: int) -> None:
        self._logger.debug(f"Starting episode {episode + 1}/{self._num_episodes}")
        self._environment.reset()
        self._agent.reset()
        for subscriber in self._subscribers:
            subscriber.on_episode_start()

        self._episode_steps = 0
        deadline = time.perf_counter()
        done = False
        while not done:
            done = self._step()
            self._episode_steps += 1
            if self._max_episode_steps and self._episode_steps >= self._max_episode_steps:
                self._logger.warning(f"Episode {episode + 1} stopped at the {self._max_episode_steps} step cap")
                done = True
            if self._period:
                deadline += self._period
                time.sleep(max(0.0, deadline - time.perf_counter()))

        self._logger.debug(f"Episode {episode + 1} completed after {self._episode_steps} steps")
        for subscriber in self._subscribers:
            subscriber.on_episode_end()

    def _step(self) -> bool:
        """One transition. Returns True when the environment reports the episode over."""
        observation = self._environment.get_observation()
        action = self._agent.get_action(observation)
        self._environment.apply_action(action)
        next_observation = self._environment.get_observation()
        for subscriber in self._subscribers:
            subscriber.on_step(observation, action, next_observation)
        return self._environment.is_episode_complete()
