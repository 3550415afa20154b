"""The learning controller and its closed-loop episode simulator.

The controller never sees the plant state. It works on an extended state:
the newest outputs (one more than the configured output history length) and
the inputs it issued over the worst-case delay window plus that history.
Episodes run on the sensor's sampling grid; payload timing goes through the
two delay channels, and the plant is integrated between samples with input
switches applied exactly where the delayed actuation lands.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .delays import CP, SC, Actuator, DelayModel, DelayedChannel, DelayRecord, sample_delay
from .errors import DimensionError, DivergenceError, NumericsError
from .naf import assemble_scale_matrix, head_gradients
from .nn import (AdamState, MlpNetwork, adam_step, backward, bind_flat_storage,
                 forward, init_network, soft_update)
from .plant import InputSchedule, PlantModel, SensorMap, integrate, sense
from .reward import (RewardWeights, input_history_reward, output_change_reward,
                     output_history_reward, total_reward)

# Episode score: sum of stepwise rewards from this sampling index onward.
METRIC_START = 50


# ---------------------------------------------------------------------------
# Extended state


def extended_state_dim(output_dim: int, input_dim: int, delay_steps: int,
                       output_history_len: int) -> int:
    return output_dim * (output_history_len + 1) + input_dim * (
        delay_steps + output_history_len)


@dataclass(frozen=True)
class ExtendedState:
    """Newest-first concatenation of recent outputs and issued inputs."""

    vec: np.ndarray
    output_dim: int
    input_dim: int
    delay_steps: int
    output_history_len: int

    def outputs(self) -> np.ndarray:
        """(output_history_len + 1, p) block, newest first."""
        n = self.output_dim * (self.output_history_len + 1)
        return self.vec[:n].reshape(-1, self.output_dim)

    def inputs(self) -> np.ndarray:
        """(delay_steps + output_history_len, m) block, newest first."""
        n = self.output_dim * (self.output_history_len + 1)
        return self.vec[n:].reshape(-1, self.input_dim)

    def newest_output(self) -> np.ndarray:
        return self.vec[:self.output_dim]


class HistoryBuffer:
    """Ring buffers of past outputs and inputs backing the extended state.

    Before the first sample, inputs read as zero; outputs read as the first
    observed output (so the initial extended state carries no fictitious
    jumps).
    """

    def __init__(self, output_dim: int, input_dim: int, delay_steps: int,
                 output_history_len: int):
        if output_history_len < 1:
            raise ValueError("output history length must be >= 1")
        if delay_steps < 0:
            raise ValueError("delay steps must be >= 0")
        self.output_dim = output_dim
        self.input_dim = input_dim
        self.delay_steps = delay_steps
        self.output_history_len = output_history_len
        self._outputs = deque(maxlen=output_history_len + 1)
        self._inputs = deque(maxlen=delay_steps + output_history_len)
        self.steps_seen = 0

    def reset(self, y0):
        y0 = np.asarray(y0, dtype=float)
        if y0.shape != (self.output_dim,):
            raise DimensionError(f"output has shape {y0.shape}, expected "
                                 f"({self.output_dim},)")
        self._outputs.clear()
        self._inputs.clear()
        for _ in range(self._outputs.maxlen):
            self._outputs.appendleft(y0.copy())
        for _ in range(self._inputs.maxlen):
            self._inputs.appendleft(np.zeros(self.input_dim))
        self.steps_seen = 1

    def push_output(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.output_dim,):
            raise DimensionError(f"output has shape {y.shape}, expected "
                                 f"({self.output_dim},)")
        self._outputs.appendleft(y.copy())
        self.steps_seen += 1

    def push_input(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.input_dim,):
            raise DimensionError(f"input has shape {u.shape}, expected "
                                 f"({self.input_dim},)")
        self._inputs.appendleft(u.copy())

    def extended_state(self) -> ExtendedState:
        if self.steps_seen == 0:
            raise RuntimeError("history not initialized; reset with the first output")
        vec = np.concatenate([np.concatenate(list(self._outputs)),
                              np.concatenate(list(self._inputs))])
        return ExtendedState(vec, self.output_dim, self.input_dim,
                             self.delay_steps, self.output_history_len)


def build_extended_state(hist: HistoryBuffer) -> ExtendedState:
    return hist.extended_state()


# ---------------------------------------------------------------------------
# Replay memory and exploration noise


@dataclass(frozen=True)
class Transition:
    w: ExtendedState
    u: np.ndarray
    w_next: ExtendedState
    r: float


class ReplayMemory:
    """Bounded FIFO of transitions; uniform sampling without replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0
        self.total_pushed = 0

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def push(self, item: Transition):
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
            self._cursor = (self._cursor + 1) % self.capacity
        self.total_pushed += 1

    def sample(self, rng: np.random.Generator, n: int) -> list[Transition]:
        if n > len(self._items):
            raise ValueError(f"cannot sample {n} of {len(self._items)} transitions")
        idx = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class OuSettings:
    """Mean-reverting exploration noise and its episode scale schedule."""

    theta: float = 0.15
    sigma: float = 0.2
    scale: float = 3.5
    decay_start: int = 1000
    scale_final: float = 0.05


class OrnsteinUhlenbeck:
    """Euler-Maruyama mean-reverting process around zero."""

    def __init__(self, dim: int, theta: float = 0.15, sigma: float = 0.2):
        if theta < 0 or sigma < 0:
            raise ValueError("theta and sigma must be nonnegative")
        self.theta = theta
        self.sigma = sigma
        self.state = np.zeros(dim)

    def reset(self):
        self.state = np.zeros_like(self.state)

    def step(self, dt: float, rng: np.random.Generator) -> np.ndarray:
        if dt <= 0:
            raise ValueError("dt must be positive")
        kick = self.sigma * math.sqrt(dt) * rng.standard_normal(self.state.shape)
        self.state = self.state - self.theta * self.state * dt + kick
        return self.state.copy()


def noise_scale(settings: OuSettings, episode: int, total_episodes: int) -> float:
    """Full scale through decay_start, then linear decay to scale_final at
    the final episode."""
    if episode <= settings.decay_start or total_episodes <= settings.decay_start:
        return settings.scale
    frac = (episode - settings.decay_start) / (total_episodes - settings.decay_start)
    return settings.scale + (settings.scale_final - settings.scale) * frac


def ou_step(process: OrnsteinUhlenbeck, dt: float, episode: int,
            settings: OuSettings, total_episodes: int,
            rng: np.random.Generator) -> np.ndarray:
    """Advance the process and return the episode-scaled noise sample."""
    return noise_scale(settings, episode, total_episodes) * process.step(dt, rng)


# ---------------------------------------------------------------------------
# Temporal-difference pieces


def td_target(r: float, v_next: float, gamma: float) -> float:
    return r + gamma * v_next


def batch_targets(target_net: MlpNetwork, batch, gamma: float) -> np.ndarray:
    """Bootstrap targets r + gamma * V(w'; target), one per transition."""
    w_next = np.stack([tr.w_next.vec for tr in batch])
    v_next = forward(target_net, w_next).value
    r = np.array([tr.r for tr in batch])
    return r + gamma * v_next


def batch_loss_and_grad(net: MlpNetwork, target_net: MlpNetwork, batch,
                        gamma: float):
    """Mean squared TD error over the batch and its exact parameter gradient.

    Targets come from the target network and enter as constants; the
    gradient flows only through the main network's value, action and scale
    heads.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    targets = batch_targets(target_net, batch, gamma)
    w = np.stack([tr.w.vec for tr in batch])
    u = np.stack([np.atleast_1d(tr.u) for tr in batch])
    m = net.action_dim

    trace = forward(net, w)
    scale = assemble_scale_matrix(trace.scale_entries, m)
    d = u - trace.action
    s = np.einsum("bij,bi->bj", scale, d)
    q = trace.value - 0.5 * np.einsum("bj,bj->b", s, s)
    resid = q - targets
    if not np.isfinite(resid).all():
        bad = int(np.flatnonzero(~np.isfinite(resid))[0])
        raise NumericsError(f"non-finite TD error at transition {bad} of the batch")
    n = len(batch)
    loss = float(resid @ resid) / n

    dq = 2.0 * resid / n
    d_value, d_action, d_scale = head_gradients(trace.action,
                                                trace.scale_entries, u, dq, m)
    grad, _ = backward(net, trace, (d_value, d_action, d_scale))
    return loss, grad


# ---------------------------------------------------------------------------
# Closed-loop episode


@dataclass(frozen=True)
class TrainSettings:
    """Everything the training loop needs beyond the physical setup."""

    episodes: int
    steps_per_episode: int
    delta: float
    max_delay_steps: int
    output_history_len: int
    gamma: float = 0.99
    soft_update_rate: float = 0.001
    batch_size: int = 128
    update_iters: int = 10
    update_period: int = 4
    learning_rate: float = 1.25e-5
    replay_capacity: int = 1_000_000
    warmup: int = 128
    init_box: float = 4.5
    divergence_penalty: float = -1000.0
    noise: OuSettings = field(default_factory=OuSettings)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 < self.soft_update_rate <= 1.0:
            raise ValueError("soft update rate must be in (0, 1]")
        if self.episodes < 1 or self.steps_per_episode < 1:
            raise ValueError("episodes and steps per episode must be >= 1")
        if self.warmup < self.batch_size:
            raise ValueError("warmup must be at least one batch")
        if self.update_period < 1 or self.update_iters < 0:
            raise ValueError("bad update cadence")


@dataclass(frozen=True)
class LoopSetup:
    """Physical side of the loop: plant, sensor, channels, integrator grain."""

    plant: PlantModel
    sensor: SensorMap
    delays: DelayModel
    substep: float
    reward_weights: RewardWeights = field(default_factory=RewardWeights)


def transition_reward(w: ExtendedState, u, w_next: ExtendedState,
                      weights: RewardWeights) -> float:
    """Composite reward, a pure function of (w, u, w')."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    r_change = output_change_reward(w_next.newest_output(), w.newest_output(),
                                    u, weights)
    r_outputs = output_history_reward(w.outputs(), weights)
    r_inputs = input_history_reward(np.vstack([u[None, :], w.inputs()]), weights)
    return total_reward(r_change, r_outputs, r_inputs)


@dataclass
class SampleRow:
    """Closed-loop log entry at one sampling instant."""

    k: int
    t: float
    state: np.ndarray
    output: np.ndarray
    applied_input: np.ndarray
    sc_delay: float
    cp_delay: float
    ctrl_arrival: float
    plant_arrival: float


@dataclass
class EpisodeResult:
    rewards: list
    transitions: list
    samples: list
    delay_records: list
    diverged: bool = False
    diverged_at: float | None = None

    def reward_sum_from(self, start: int = METRIC_START) -> float:
        return float(sum(self.rewards[start:]))


def run_episode(net: MlpNetwork, setup: LoopSetup, settings: TrainSettings, *,
                x0, rng: np.random.Generator, mode: str = "train",
                noise: OrnsteinUhlenbeck | None = None,
                noise_scale_value: float = 0.0, replay: ReplayMemory | None = None,
                on_step=None) -> EpisodeResult:
    """Simulate one episode of the delayed closed loop.

    On the k-th sampling instant the sensed output goes through the
    sensor-to-controller channel; on its (clamped) arrival the controller
    extends its histories, scores and stores the previous transition,
    evaluates the policy (plus scaled exploration noise in train mode) and
    sends the input through the controller-to-plant channel. The actuator
    holds each delayed input until the next one lands. on_step(k) fires
    after the k-th input is issued.

    Plant divergence ends the episode early: the final transition is a
    self-loop carrying the divergence penalty.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    plant, sensor = setup.plant, setup.sensor
    delta = sensor.period
    sc_channel, cp_channel = DelayedChannel(), DelayedChannel()
    actuator = Actuator(plant.input_dim)
    hist = HistoryBuffer(sensor.output_dim, plant.input_dim,
                         settings.max_delay_steps, settings.output_history_len)
    if noise is not None:
        noise.reset()

    x = np.asarray(x0, dtype=float).copy()
    t_plant = 0.0
    result = EpisodeResult([], [], [], [])
    w_prev = None
    u_prev = None

    for k in range(settings.steps_per_episode + 1):
        t_k = k * delta

        arrivals = cp_channel.poll(t_k)
        held_before = actuator.held
        fragment = actuator.apply(arrivals)
        if t_k > t_plant:
            try:
                x = integrate(plant, x, InputSchedule(held_before, fragment),
                              t_plant, t_k, setup.substep)
            except DivergenceError as err:
                result.diverged = True
                result.diverged_at = err.time
                if w_prev is not None and u_prev is not None:
                    r = settings.divergence_penalty
                    result.rewards.append(r)
                    if mode == "train":
                        tr = Transition(w_prev, u_prev, w_prev, r)
                        result.transitions.append(tr)
                        if replay is not None:
                            replay.push(tr)
                break
            t_plant = t_k

        y_k = sense(x, sensor)
        sc_delay = sample_delay(setup.delays, SC, rng)
        cp_delay = sample_delay(setup.delays, CP, rng)
        ctrl_arrival = sc_channel.send(t_k, y_k, sc_delay)
        received = sc_channel.poll(ctrl_arrival)
        y_recv = received[-1][1]

        if k == 0:
            hist.reset(y_recv)
        else:
            hist.push_output(y_recv)
        w_k = hist.extended_state()

        if k >= 1:
            r = transition_reward(w_prev, u_prev, w_k, setup.reward_weights)
            result.rewards.append(r)
            if mode == "train":
                tr = Transition(w_prev, u_prev, w_k, r)
                result.transitions.append(tr)
                if replay is not None:
                    replay.push(tr)

        mu_k = forward(net, w_k.vec).mu
        if mode == "train" and noise is not None:
            u_k = mu_k + noise_scale_value * noise.step(delta, rng)
        else:
            u_k = mu_k.copy()
        hist.push_input(u_k)
        plant_arrival = cp_channel.send(ctrl_arrival, u_k, cp_delay)

        result.samples.append(SampleRow(k, t_k, x.copy(), y_k,
                                        actuator.held.copy(), sc_delay,
                                        cp_delay, ctrl_arrival, plant_arrival))
        result.delay_records.append(DelayRecord(k, t_k, sc_delay, cp_delay,
                                                ctrl_arrival, plant_arrival))
        w_prev, u_prev = w_k, u_k
        if on_step is not None:
            on_step(k)

    return result


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainRow:
    """One learning-curve entry."""

    episode: int
    reward_sum: float
    mean_loss: float
    noise_scale: float
    seconds_elapsed: float


class Trainer:
    """Owns the networks, optimizer, replay memory and all random streams.

    A fixed seed makes the whole run deterministic: network init, initial
    states, delays, exploration noise and minibatch choices all derive from
    it through independent child streams.
    """

    def __init__(self, setup: LoopSetup, settings: TrainSettings,
                 hidden_widths, tanh_weight: float, seed: int):
        self.setup = setup
        self.settings = settings
        self.seed = seed
        p = setup.sensor.output_dim
        m = setup.plant.input_dim
        dim = extended_state_dim(p, m, settings.max_delay_steps,
                                 settings.output_history_len)
        root = np.random.SeedSequence(seed)
        net_ss, sample_ss, self._episode_root = root.spawn(3)
        net_seed = int(net_ss.generate_state(1)[0])
        self.net = init_network([dim, *hidden_widths], m, tanh_weight, net_seed)
        self.theta = bind_flat_storage(self.net)
        self.target = self.net.copy()
        self.theta_target = bind_flat_storage(self.target)
        self.adam = AdamState.fresh(self.theta.size, lr=settings.learning_rate)
        self.replay = ReplayMemory(settings.replay_capacity)
        self.noise = OrnsteinUhlenbeck(m, settings.noise.theta,
                                       settings.noise.sigma)
        self._sample_rng = np.random.default_rng(sample_ss)
        self.update_count = 0
        self._episode_losses: list[float] = []

    def _update_block(self):
        s = self.settings
        for _ in range(s.update_iters):
            batch = self.replay.sample(self._sample_rng, s.batch_size)
            loss, grad = batch_loss_and_grad(self.net, self.target, batch, s.gamma)
            new_theta, self.adam = adam_step(self.theta, grad, self.adam)
            self.theta[:] = new_theta
            self.theta_target[:] = soft_update(self.theta_target, self.theta,
                                               s.soft_update_rate)
            self._episode_losses.append(loss)
            self.update_count += 1

    def _on_step(self, k: int):
        s = self.settings
        if k > 0 and k % s.update_period == 0 and len(self.replay) >= s.warmup:
            self._update_block()

    def run_training_episode(self, episode: int) -> tuple[TrainRow, EpisodeResult]:
        s = self.settings
        ep_rng = np.random.default_rng(self._episode_root.spawn(1)[0])
        x0 = ep_rng.uniform(-s.init_box, s.init_box,
                            size=self.setup.plant.state_dim)
        scale = noise_scale(s.noise, episode, s.episodes)
        self._episode_losses = []
        result = run_episode(self.net, self.setup, s, x0=x0, rng=ep_rng,
                             mode="train", noise=self.noise,
                             noise_scale_value=scale, replay=self.replay,
                             on_step=self._on_step)
        losses = self._episode_losses
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        row = TrainRow(episode, result.reward_sum_from(), mean_loss, scale, 0.0)
        return row, result

    def run(self, on_episode=None) -> list[TrainRow]:
        """Train for the configured number of episodes; returns the curve."""
        started = time.perf_counter()
        rows = []
        for episode in range(1, self.settings.episodes + 1):
            row, result = self.run_training_episode(episode)
            row.seconds_elapsed = time.perf_counter() - started
            rows.append(row)
            if on_episode is not None:
                on_episode(episode, row, result)
        return rows
