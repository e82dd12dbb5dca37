"""``heatdemo`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .. import comm
from ..config import AdapterConfig, CouplingConfig
from ..errors import CouplingError
from .participant import problem_from_config, run_coupled, run_monolithic, run_participant
from .problem import Role


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatdemo", description="Partitioned heat conduction with a manufactured solution.")
    p.add_argument("--role", required=True, choices=[r.value for r in Role])
    p.add_argument("--adapter-config", type=Path, help="adapter config of this participant")
    p.add_argument("--coupling-config", type=Path,
                   help="coupling config; defaults to the one named in the adapter config")
    p.add_argument("--endpoint", default="127.0.0.1:47100", help="HOST:PORT; the first participant listens here")
    p.add_argument("--transport", choices=["tcp", "inprocess"], default="tcp")
    p.add_argument("--peer-adapter-config", type=Path,
                   help="inprocess only: adapter config of the peer, run on a second thread")
    p.add_argument("--out-dir", type=Path, default=Path("heatdemo-out"))
    p.add_argument("--nx", type=int, default=10)
    p.add_argument("--ny", type=int, default=10)
    p.add_argument("--dt-solver", type=float, help="solver timestep; defaults to the time window size")
    p.add_argument("--max-time", type=float, default=1.0, help="monolithic only")
    p.add_argument("--timeout", type=float, default=60.0, help="seconds to wait for the peer")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _summary(report) -> str:
    iters = report.iterations_per_window
    extra = f" iterations/window={iters}" if iters else ""
    return f"{report.participant}: t={report.final_time:g} linf={report.linf:.3e} l2={report.l2:.3e}{extra}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    role = Role(args.role)
    try:
        coupling = CouplingConfig.load(args.coupling_config) if args.coupling_config else None

        if role is Role.MONOLITHIC:
            problem = problem_from_config(role, coupling, args.nx, args.ny, args.dt_solver)
            max_time = coupling.max_time if coupling is not None else args.max_time
            print(_summary(run_monolithic(problem, max_time=max_time, out_dir=args.out_dir)))
            return 0

        if args.adapter_config is None:
            print("heatdemo: --adapter-config is required for coupled roles", file=sys.stderr)
            return 2
        own = AdapterConfig.load(args.adapter_config, coupling)
        coupling = own.coupling

        if args.transport == "inprocess":
            if args.peer_adapter_config is None:
                print("heatdemo: --transport inprocess needs --peer-adapter-config", file=sys.stderr)
                return 2
            peer = AdapterConfig.load(args.peer_adapter_config, coupling)
            peer_role = Role.NEUMANN if role is Role.DIRICHLET else Role.DIRICHLET
            case = {role.value: args.adapter_config, peer_role.value: args.peer_adapter_config}
            problems = {r.value: problem_from_config(r, coupling, args.nx, args.ny, args.dt_solver) for r in (role, peer_role)}
            if peer.participant_name == own.participant_name:
                print("heatdemo: peer adapter config names the same participant", file=sys.stderr)
                return 2
            reports = run_coupled(case, "inprocess", problems=problems, out_dir=args.out_dir, timeout=args.timeout,
                                  coupling=coupling)
            for r in (role, peer_role):
                print(_summary(reports[r.value]))
            return 0

        host, port = comm.parse_endpoint(args.endpoint)
        first = own.participant_name == coupling.first_participant
        if first:
            listener = comm.TcpListener(host, port)
            try:
                channel = listener.accept(args.timeout)
            finally:
                listener.close()
        else:
            channel = comm.connect(comm.Tcp(host, port, "initiator", args.timeout))
        problem = problem_from_config(role, coupling, args.nx, args.ny, args.dt_solver)
        with channel:
            report = run_participant(role, args.adapter_config, problem, channel, coupling_config=coupling,
                                     out_dir=args.out_dir)
        print(_summary(report))
        return 0
    except (CouplingError, OSError, ValueError) as exc:
        print(f"heatdemo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
