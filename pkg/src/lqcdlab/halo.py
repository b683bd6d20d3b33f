"""In-process halo exchange over a simulated rank grid.

The communicator reproduces the send/compute/receive overlap of the stencil
apply without any real transport: every (destination rank, direction mu,
travel step) channel is a capacity-one mailbox, and ranks run either
sequentially in phase lockstep or on one worker thread each.

Message flow per apply, for each direction mu with more than one rank:

* lam values of the local -mu face travel one rank downward (step -1); the
  receiver uses them as its +mu halo for the link-multiplied accumulation.
* chi values computed for off-rank destinations travel one rank upward
  (step +1); the receiver scatters them onto its -mu face.

Both streams are posted before the compute that could overlap them and are
completed right before the accumulation that consumes them.  Channels with a
single rank in their direction degenerate to loopback mailboxes carrying
empty payloads, so the epoch audit stays uniform across grid shapes.

The multi-rank apply is bit-identical to the single-rank one: both run the
same kernels in the same stage order, and rank-local slices only permute the
site axis.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import dirac as _dirac
from .fields import BlockSpinorField, CloverField, GaugeField
from .geometry import NDIM, LatticeGeometry, RankDomain, RankGrid, decompose
from .projectors import N_COLOR, table

DEFAULT_TIMEOUT = 5.0

_STEP_NAME = {1: "+", -1: "-"}


class HaloTimeoutError(RuntimeError):
    """No matching message arrived; names the starving channel."""

    def __init__(self, rank: int, mu: int, step: int, timeout: float):
        self.rank = rank
        self.mu = mu
        self.step = step
        super().__init__(
            f"no message for rank {rank} on channel (mu={mu}, dir={_STEP_NAME[step]}) "
            f"after {timeout:.1f} s; matching send was never posted"
        )


@dataclass
class HaloMessage:
    src_rank: int
    dst_rank: int
    mu: int
    step: int
    payload: np.ndarray  # (boundary sites, 2, 3, b) complex, ascending site order


class _Mailbox:
    """Single-slot channel; one producer, one consumer."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._slot: HaloMessage | None = None
        self._epoch = -1
        self.posted = 0
        self.consumed = 0

    def reset(self, epoch: int) -> None:
        with self._cond:
            self._slot = None
            self._epoch = epoch

    def post(self, msg: HaloMessage) -> None:
        with self._cond:
            if self._slot is not None:
                raise RuntimeError(
                    f"duplicate post to rank {msg.dst_rank} channel "
                    f"(mu={msg.mu}, dir={_STEP_NAME[msg.step]}) in epoch {self._epoch}"
                )
            self._slot = msg
            self.posted += 1
            self._cond.notify()

    def take(self, rank: int, mu: int, step: int, timeout: float) -> HaloMessage:
        with self._cond:
            if not self._cond.wait_for(lambda: self._slot is not None, timeout):
                raise HaloTimeoutError(rank, mu, step, timeout)
            msg = self._slot
            self._slot = None
            self.consumed += 1
            return msg


@dataclass
class EpochStats:
    epoch: int
    rank: int
    wait_seconds: float
    compute_seconds: float

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "rank": self.rank,
            "wait_seconds": self.wait_seconds,
            "compute_seconds": self.compute_seconds,
        }


class CommunicatorSet:
    """All mailboxes of one rank grid plus the global epoch counter."""

    def __init__(self, grid: RankGrid, timeout: float = DEFAULT_TIMEOUT):
        self.grid = grid
        self.timeout = timeout
        self.epoch = 0
        self._boxes = {
            (rank, mu, step): _Mailbox()
            for rank in range(grid.n_ranks)
            for mu in range(NDIM)
            for step in (1, -1)
        }
        self._comms = [Communicator(self, rank) for rank in range(grid.n_ranks)]

    def rank_comm(self, rank: int) -> "Communicator":
        return self._comms[rank]

    def begin_epoch(self) -> int:
        """Advance the global epoch; clears every channel and all rank stats."""
        self.epoch += 1
        for box in self._boxes.values():
            box.reset(self.epoch)
        now = time.perf_counter()
        for comm in self._comms:
            comm._begin_epoch(now)
        return self.epoch

    def box(self, rank: int, mu: int, step: int) -> _Mailbox:
        return self._boxes[(rank, mu, step)]

    def audit(self) -> dict:
        """Per-channel (posted, consumed) counters accumulated over all epochs."""
        return {key: (box.posted, box.consumed) for key, box in self._boxes.items()}


class Communicator:
    """One rank's endpoint: routed sends, blocking receives, wait accounting."""

    def __init__(self, commset: CommunicatorSet, rank: int):
        self.commset = commset
        self.rank = rank
        self._wait_seconds = 0.0
        self._epoch_start = time.perf_counter()
        self._last_stats: EpochStats | None = None

    @property
    def grid(self) -> RankGrid:
        return self.commset.grid

    def _begin_epoch(self, now: float) -> None:
        self._wait_seconds = 0.0
        self._epoch_start = now

    def post_send(self, mu: int, step: int, payload: np.ndarray) -> HaloMessage:
        """Non-blocking: hand the payload to the (mu, step) neighbor's mailbox."""
        dst = self.grid.neighbor_rank(self.rank, mu, step)
        msg = HaloMessage(self.rank, dst, mu, step, np.ascontiguousarray(payload).copy())
        self.commset.box(dst, mu, step).post(msg)
        return msg

    def complete_recv(self, mu: int, step: int) -> np.ndarray:
        """Block until the (mu, step) message for this rank arrives."""
        t0 = time.perf_counter()
        msg = self.commset.box(self.rank, mu, step).take(self.rank, mu, step, self.commset.timeout)
        self._wait_seconds += time.perf_counter() - t0
        return msg.payload

    def end_epoch(self) -> EpochStats:
        elapsed = time.perf_counter() - self._epoch_start
        self._last_stats = EpochStats(
            epoch=self.commset.epoch,
            rank=self.rank,
            wait_seconds=self._wait_seconds,
            compute_seconds=max(elapsed - self._wait_seconds, 0.0),
        )
        return self._last_stats

    def exchange_epoch_stats(self) -> EpochStats | None:
        """Stats of the last finished epoch (None before the first one)."""
        return self._last_stats


def exchange_epoch_stats(comm: Communicator) -> EpochStats | None:
    return comm.exchange_epoch_stats()


@dataclass
class _RankPlan:
    """Static gather/scatter tables of one rank, reused across applies."""

    domain: RankDomain
    gauge: GaugeField
    clover: CloverField
    # per mu: local forward-neighbor index with boundary entries redirected
    # past the end of the local field, into the received halo block
    ext_fwd: list[np.ndarray] = dc_field(default_factory=list)


class MultiRankExecutor:
    """Runs the stencil apply over a simulated rank grid.

    Accepts whole-lattice fields, splits them by ownership, executes every
    rank (sequentially in phase lockstep, or one thread per rank), and merges
    the local results.  Passing an instance as ``comm`` to
    :func:`lqcdlab.dirac.apply_dirac` routes the apply through here.
    """

    def __init__(self, grid: RankGrid, mode: str = "sequential", timeout: float = DEFAULT_TIMEOUT):
        if mode not in ("sequential", "threads"):
            raise ValueError(f"unknown execution mode {mode!r}")
        self.grid = grid
        self.mode = mode
        self.commset = CommunicatorSet(grid, timeout)
        self._plans: list[_RankPlan] | None = None
        self._plan_key: tuple | None = None
        self.last_stats: list[EpochStats] = []

    def _plans_for(self, gauge: GaugeField, clover: CloverField) -> list[_RankPlan]:
        key = (gauge.geom.dims, id(gauge.data), id(clover.data))
        if self._plan_key == key and self._plans is not None:
            return self._plans
        domains = decompose(gauge.geom, self.grid)
        plans = []
        for dom in domains:
            local_gauge = GaugeField(dom.local_geom, np.ascontiguousarray(gauge.data[dom.global_sites]))
            local_clover = CloverField(dom.local_geom, np.ascontiguousarray(clover.data[dom.global_sites]))
            plan = _RankPlan(dom, local_gauge, local_clover)
            n_loc = dom.local_geom.n_sites
            for mu in range(NDIM):
                fwd = dom.local_geom.neighbor_table(mu, +1).copy()
                bnd = dom.boundary[(mu, 1)]
                fwd[bnd] = n_loc + np.arange(len(bnd))
                plan.ext_fwd.append(fwd)
            plans.append(plan)
        self._plans = plans
        self._plan_key = key
        return plans

    def apply_dirac(
        self,
        params: _dirac.DiracParams,
        gauge: GaugeField,
        clover: CloverField,
        psi: BlockSpinorField,
        flops: _dirac.FlopCounter | None = None,
        perf: list | None = None,
    ) -> BlockSpinorField:
        if psi.n_sites != gauge.geom.n_sites:
            raise ValueError(f"field has {psi.n_sites} sites, lattice has {gauge.geom.n_sites}")
        t0 = time.perf_counter()
        plans = self._plans_for(gauge, clover)
        psi_view = psi.ksi()
        locals_psi = []
        for plan in plans:
            loc = BlockSpinorField.zeros(
                plan.domain.local_geom.n_sites, psi.b, psi.layout, psi.s, plan.domain.local_geom
            )
            loc.set_ksi(psi_view[plan.domain.global_sites])
            locals_psi.append(loc)

        self.commset.begin_epoch()
        runners = [
            self._rank_phases(plan, self.commset.rank_comm(plan.domain.rank), params, loc, flops)
            for plan, loc in zip(plans, locals_psi)
        ]
        results: list[BlockSpinorField | None] = [None] * len(plans)

        if self.mode == "sequential":
            live = list(enumerate(runners))
            while live:
                still = []
                for idx, gen in live:
                    try:
                        next(gen)
                        still.append((idx, gen))
                    except StopIteration as stop:
                        results[idx] = stop.value
                live = still
        else:
            def drive(idx: int, gen) -> None:
                out = None
                try:
                    while True:
                        next(gen)
                except StopIteration as stop:
                    out = stop.value
                results[idx] = out

            threads = [
                threading.Thread(target=drive, args=(idx, gen), name=f"rank-{idx}")
                for idx, gen in enumerate(runners)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            for idx, res in enumerate(results):
                if res is None:
                    raise RuntimeError(f"rank {idx} worker died without a result")

        self.last_stats = [self.commset.rank_comm(r).end_epoch() for r in range(self.grid.n_ranks)]

        eta = BlockSpinorField.zeros_like(psi)
        ev = eta.ksi()
        for plan, res in zip(plans, results):
            ev[plan.domain.global_sites] = res.ksi()
        if perf is not None:
            seconds = time.perf_counter() - t0
            ledger = _dirac.account_traffic(psi.b)
            perf.append(
                _dirac.DiracPerfRecord(
                    seconds=seconds,
                    sites=psi.n_sites,
                    b=psi.b,
                    layout=int(psi.layout),
                    flops=ledger["flops_per_site"] * psi.n_sites,
                    bytes=ledger["bytes_per_site"] * psi.n_sites,
                )
            )
        return eta

    def _rank_phases(
        self,
        plan: _RankPlan,
        comm: Communicator,
        params: _dirac.DiracParams,
        psi: BlockSpinorField,
        flops: _dirac.FlopCounter | None,
    ):
        """Generator running one rank's apply; yields at phase barriers."""
        proj = table()
        dom = plan.domain
        b = psi.b

        # stage 1: self coupling, lam workspaces, post lam sends downward
        eta = _dirac.apply_self_coupling(params, plan.clover, psi, flops=flops)
        lam = [_dirac.project_minus(proj, psi, mu, flops=flops) for mu in range(NDIM)]
        lam_views = [_dirac._half_view(f) for f in lam]
        for mu in range(NDIM):
            comm.post_send(mu, -1, lam_views[mu][dom.boundary[(mu, -1)]])
        yield

        # stage 2: chi workspaces at local destinations, post chi sends upward
        chi = []
        for mu in range(NDIM):
            vals = _dirac._chi_source_values(plan.gauge, psi, mu, flops=flops)
            field = BlockSpinorField.zeros(dom.local_geom.n_sites, b, psi.layout, s=6, geom=dom.local_geom)
            _dirac._half_view(field)[...] = vals[dom.local_geom.neighbor_table(mu, -1)]
            comm.post_send(mu, +1, vals[dom.boundary[(mu, 1)]])
            chi.append(field)
        yield

        # stage 3: receive lam halos, accumulate the link-multiplied hop
        for mu in range(NDIM):
            halo = comm.complete_recv(mu, -1)
            ext = np.concatenate([lam_views[mu], halo], axis=0) if len(halo) else lam_views[mu]
            _dirac.accumulate_hop_minus(
                proj, plan.gauge, lam[mu], eta, mu, flops=flops, lam_at_forward=ext[plan.ext_fwd[mu]]
            )
            _dirac._count_reconstruction(flops, eta.n_sites, b)
        yield

        # stage 4: receive chi halos onto the -mu faces, accumulate
        for mu in range(NDIM):
            halo = comm.complete_recv(mu, +1)
            if len(halo):
                _dirac._half_view(chi[mu])[dom.boundary[(mu, -1)]] = halo
            _dirac.accumulate_hop_plus(chi[mu], eta, mu, flops=flops)
            _dirac._count_reconstruction(flops, eta.n_sites, b)
        return eta


def apply_dirac_multirank(
    params: _dirac.DiracParams,
    gauge: GaugeField,
    clover: CloverField,
    psi: BlockSpinorField,
    grid: RankGrid,
    mode: str = "sequential",
    timeout: float = DEFAULT_TIMEOUT,
) -> tuple[BlockSpinorField, MultiRankExecutor]:
    """One-shot multi-rank apply; returns the result and the executor (stats)."""
    ex = MultiRankExecutor(grid, mode=mode, timeout=timeout)
    return ex.apply_dirac(params, gauge, clover, psi), ex
