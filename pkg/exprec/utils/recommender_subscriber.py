import csv
from pathlib import Path as FilePath

from typing_extensions import override

from exprec.course import Path
from exprec.recommender import ExperiencePolicy, RecommendationEvent
from exprec.runtime.agent import Action
from exprec.runtime.environment import Observation
from exprec.runtime.subscriber import Subscriber

SCORE_COLUMNS = ("step", "t", "vertex", "run_id", "p_b", "n_out", "trials", "L_i", "L_prior", "accepted", "chosen")
RECOMMENDATION_COLUMNS = ("step", "t", "vertex", "x", "y", "curvature", "chosen_run", "n_accepted", "n_candidates", "control_size")


class RecommenderSubscriber(Subscriber):
    """Invokes the experience policy between control steps and logs what it decided.

    The policy's compute time is accumulated on the policy, separate from the control loop.
    """

    def __init__(self, policy: ExperiencePolicy, path: Path, out_dir: str | FilePath | None = None):
        self.policy = policy
        self.path = path
        self.out_dir = FilePath(out_dir) if out_dir is not None else None
        self.events: list[tuple[int, RecommendationEvent]] = []

    @override
    def on_episode_start(self) -> None:
        self.events = []

    @override
    def on_step(self, observation: Observation, action: Action, next_observation: Observation) -> None:
        event = self.policy.step()
        if not event.skipped:
            self.events.append((observation["step"], event))

    @override
    def on_episode_end(self) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / "recommendations.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(RECOMMENDATION_COLUMNS)
            for step, e in self.events:
                x, y = self.path.xy[e.vertex]
                writer.writerow([
                    step, repr(e.t), e.vertex, repr(float(x)), repr(float(y)), repr(float(self.path.curvature[e.vertex])),
                    "" if e.run_id is None else e.run_id, sum(s.accepted for s in e.scores), len(e.scores), e.control_size,
                ])
        with open(self.out_dir / "scores.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(SCORE_COLUMNS)
            for step, e in self.events:
                for s in e.scores:
                    writer.writerow([
                        step, repr(e.t), e.vertex, s.run_id, repr(s.p_b), s.n_out, s.trials,
                        repr(s.log_prob), repr(s.log_prob_prior), int(s.accepted), int(s.run_id == e.run_id),
                    ])
