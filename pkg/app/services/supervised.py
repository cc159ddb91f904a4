# Copyright 2024
# Directory: ContourMARL/app/services/supervised.py

"""
Distance-loss baseline: the same actor regressed onto the clamped displacement
toward the nearest ground-truth boundary pixel, trained on the same episodes
and written in the same checkpoint format as the SAC runs.
"""

import logging

import numpy as np

from ..core import diffcore as dc
from ..core.errors import NonFiniteParameterError
from . import environment
from .policy import deterministic_action
from .sac import EpochStats, SacTrainer, start_episode

logger = logging.getLogger(__name__)


class SupervisedTrainer(SacTrainer):
    """Reuses the SAC run layout (checkpoints, log, resume) with a regression update."""

    def distance_loss(self, states: np.ndarray, targets: np.ndarray) -> dc.Tensor:
        """mean || tanh(mu) - target / delta ||^2 over agents."""
        mu, _ = self.actor.distribution(states)
        diff = dc.tanh(mu) - targets / self.config.delta
        return dc.mean(dc.sum_(dc.square(diff), axis=-1))

    def run_epoch(self, epoch: int) -> EpochStats:
        c = self.config
        self.epoch = epoch
        stats = EpochStats()
        if c.workers > 1:
            logger.info("Supervised baseline collects episodes sequentially; ignoring workers")
        picks, _ = self._episode_order(epoch)
        oracle = environment.GreedyBoundaryPolicy()
        for sample in picks:
            ep = start_episode(sample, c)
            returns = np.zeros(ep.contour.n)
            report = None
            while not ep.done:
                states = environment.state_matrix(ep, c.k_neighbors, c.embed_dim, c.patch_radius)
                loss = self.distance_loss(states, oracle.act(ep))
                stats.policy.append(self._check_loss("distance_loss", loss, 0.0))
                dc.backward(loss, self.actor.params)
                self.actor_opt.step()
                self.update_count += 1

                bad = self.actor.params.non_finite()
                if bad:
                    self._dump_nan("parameters", float("nan"), 0.0, bad)
                    logger.error(f"Non-finite actor parameters after update {self.update_count}: {bad}")
                    raise NonFiniteParameterError(bad, self.update_count)

                with dc.no_grad():
                    mu, _ = self.actor.distribution(states)
                actions = environment.clamp_actions(deterministic_action(mu, c.delta), c.delta)
                outcome = environment.step_detailed(ep, actions)
                returns += outcome.rewards
                report, ep = outcome.report, outcome.state
            stats.reports.append(report)
            stats.returns.append(float(returns.mean()))
        return stats


def train_supervised(config, samples, out_dir, resume: bool = False):
    return SupervisedTrainer(config, samples, out_dir).train(resume=resume)
