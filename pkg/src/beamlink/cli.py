"""Command-line front end for Monte Carlo throughput sweeps.

The CLI is a thin client of the HTTP service: it assembles a request from
an optional config file plus flags, posts it to `/sweep` (an in-process
application by default, or a remote server via ``--server``), writes the
returned rows to CSV, and prints a summary table.

Exit codes: 0 on success, 2 for configuration errors, 3 when more than 1%
of trials failed (including the all-failed case).
"""

from __future__ import annotations

import argparse
import asyncio
import sys

import httpx

from .config import (
    CODEBOOK_KINDS,
    CRITERIA,
    ConfigurationError,
    config_from_sources,
)
from .montecarlo import SweepRow, write_rows_csv
from .service import SweepRequest, create_app

__all__ = ["build_parser", "main", "serve"]

FAILURE_BUDGET = 0.01


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamlink",
        description="Monte Carlo throughput sweep for hybrid beamforming links.",
    )
    parser.add_argument("--config", help="flat 'key = value' configuration file")
    parser.add_argument(
        "--snr-db",
        dest="snr_db",
        help="comma-separated SNR grid in dB; write --snr-db=-20,-15,... "
        "when the first value is negative",
    )
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per SNR point")
    parser.add_argument("--seed", type=int, help="root seed for all random streams")
    parser.add_argument(
        "--codebook", choices=CODEBOOK_KINDS, help="analog beam codebook family"
    )
    parser.add_argument(
        "--criterion", choices=CRITERIA, help="beam-pair scoring rule"
    )
    parser.add_argument("--m", type=int, help="initially selected beam pairs")
    parser.add_argument(
        "--noise-free",
        dest="noise_free",
        action="store_const",
        const=True,
        help="use exact coupling measurements (no training noise)",
    )
    parser.add_argument(
        "--out", default="sweep.csv", help="output CSV path (default: sweep.csv)"
    )
    parser.add_argument(
        "--workers", type=int, default=1, help="trial-level worker threads"
    )
    parser.add_argument(
        "--server",
        help="base URL of a running sweep service; omit to run in-process",
    )
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    return {
        "snr_grid_db": args.snr_db,
        "trials": args.trials,
        "seed": args.seed,
        "codebook_kind": args.codebook,
        "criterion": args.criterion,
        "m": args.m,
        "noise_free_training": args.noise_free,
    }


def _post_sweep(payload: dict, server: str | None):
    """POST the sweep request, in-process unless a server URL is given."""
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post("/sweep", json=payload)
            return response.status_code, response.json()

    async def _in_process():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://sweep.local", timeout=None
        ) as client:
            response = await client.post("/sweep", json=payload)
            return response.status_code, response.json()

    return asyncio.run(_in_process())


def _print_summary(body: dict, out_path: str) -> None:
    print(
        f"{'snr_db':>8}  {'mean_rate':>10}  {'dbf_rate':>10}  "
        f"{'normalized':>10}  {'ci95':>8}  {'reference':>10}"
    )
    for row, ref in zip(body["rows"], body["reference_mean_rates"]):
        print(
            f"{row['snr_db']:>8.1f}  {row['mean_rate']:>10.4f}  "
            f"{row['dbf_mean_rate']:>10.4f}  {row['normalized_rate']:>10.4f}  "
            f"{row['ci95_halfwidth']:>8.4f}  {ref:>10.4f}"
        )
    print(f"rows written to {out_path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    overrides = _overrides_from_args(args)
    if overrides["snr_grid_db"] is not None:
        try:
            overrides["snr_grid_db"] = tuple(
                float(piece) for piece in overrides["snr_grid_db"].split(",") if piece.strip()
            )
        except ValueError:
            print(f"error: bad --snr-db value {args.snr_db!r}", file=sys.stderr)
            return 2
    try:
        cfg = config_from_sources(args.config, overrides)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2

    payload = SweepRequest.from_system_config(cfg, workers=args.workers).model_dump(
        mode="json"
    )
    try:
        status, body = _post_sweep(payload, args.server)
    except httpx.HTTPError as exc:
        print(f"error: could not reach sweep service: {exc}", file=sys.stderr)
        return 1

    if status == 422:
        print(f"error: {body.get('detail', body)}", file=sys.stderr)
        return 2
    if status != 200:
        print(f"error: sweep failed ({status}): {body.get('detail', body)}", file=sys.stderr)
        return 3

    rows = [SweepRow(**row) for row in body["rows"]]
    write_rows_csv(rows, args.out)
    _print_summary(body, args.out)

    failures = body["failures"]
    if failures:
        print(
            f"warning: {len(failures)} of {cfg.trials} trials failed "
            f"(first: {failures[0]['stage']}: {failures[0]['message']})",
            file=sys.stderr,
        )
    if body["failure_fraction"] > FAILURE_BUDGET:
        print(
            f"error: failure fraction {body['failure_fraction']:.3f} exceeds "
            f"the {FAILURE_BUDGET:.0%} budget",
            file=sys.stderr,
        )
        return 3
    return 0


def serve(argv=None) -> int:
    """Entry point for `beamlink-serve`: run the HTTP service with uvicorn."""
    import uvicorn

    parser = argparse.ArgumentParser(
        prog="beamlink-serve", description="Serve the sweep API over HTTP."
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
