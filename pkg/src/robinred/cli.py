"""Thin command-line client for the solver service.

Subcommands post the configuration to the HTTP API and write the
returned artifacts (CSV tables, JSON reports, solution vectors) to the
paths named in the configuration's [output] section.  By default the
service runs in-process; --url targets a remote instance.  Exit codes:
0 success, 1 verdict failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .reporting import dump_report


class _Client:
    """Minimal POST client; in-process by default, HTTP with --url."""

    def __init__(self, url: str | None):
        if url:
            import httpx

            self._client = httpx.Client(base_url=url, timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app, raise_server_exceptions=False)

    def post(self, path: str, payload: dict):
        resp = self._client.post(path, json=payload)
        try:
            body = resp.json()
        except ValueError:
            body = {"detail": resp.text}
        return resp.status_code, body


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(2)


def _write_text(path: str, text: str):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _fail_from_status(status: int, body: dict) -> int:
    detail = body.get("detail", body)
    if status == 400 or status == 422:
        print(f"configuration error: {detail}", file=sys.stderr)
        return 2
    print(f"service error ({status}): {detail}", file=sys.stderr)
    return 1


def _output_paths(body: dict) -> dict:
    return body.get("config", {}).get("output", body.get(
        "report", {}).get("config", {}).get("output", {}))


def cmd_spectrum(client: _Client, args) -> int:
    status, body = client.post("/spectrum", {
        "config": _read_text(args.config),
        "base_dir": os.path.dirname(os.path.abspath(args.config))})
    if status != 200:
        return _fail_from_status(status, body)
    out = _output_paths(body)
    if out.get("spectrum_csv"):
        _write_text(out["spectrum_csv"], body["table_csv"])
    if out.get("report"):
        _write_text(out["report"], dump_report(
            {"config": body["config"], "certificates": body["certificates"],
             "distinct_eigenvalues": body["distinct_eigenvalues"],
             "multiplicities": body["multiplicities"]}))
    for k, lam, mult in zip(range(1, len(body["distinct_eigenvalues"]) + 1),
                            body["distinct_eigenvalues"], body["multiplicities"]):
        print(f"lambda_{k} = {lam:.12g}  (multiplicity {mult})")
    return 0 if body["ok"] else 1


def cmd_check_f(client: _Client, args) -> int:
    status, body = client.post("/check-f", {
        "config": _read_text(args.config),
        "base_dir": os.path.dirname(os.path.abspath(args.config))})
    if status != 200:
        return _fail_from_status(status, body)
    print(body["table"])
    out = _output_paths(body)
    if out.get("report"):
        _write_text(out["report"], dump_report(
            {"config": body["config"], "reaction": body["reaction"],
             "audit": body["audit"]}))
    return 0 if body["ok"] else 1


def cmd_solve(client: _Client, args) -> int:
    status, body = client.post("/solve", {
        "config": _read_text(args.config),
        "base_dir": os.path.dirname(os.path.abspath(args.config))})
    if status != 200:
        return _fail_from_status(status, body)
    if not body["ok"]:
        err = body.get("error") or {}
        print(f"solve aborted at stage [{err.get('stage')}]: "
              f"{err.get('message')}", file=sys.stderr)
        table = (err.get("payload") or {}).get("table")
        if table:
            print(table, file=sys.stderr)
        return 1
    report = body["report"]
    out = report.get("config", {}).get("output", {})
    if out.get("report"):
        _write_text(out["report"], dump_report(report))
    prefix = out.get("solution_prefix", "solution")
    for i, csv_text in enumerate(body.get("solutions_csv", [])):
        _write_text(f"{prefix}_{i}.csv", csv_text)
    for i, rec in enumerate(report.get("records", [])):
        print(f"solution {i}: energy = {rec['energy']:.12g}, "
              f"residual = {rec['residual']:.3e}, "
              f"L2 norm = {rec['l2_norm']:.6g}  [{rec['provenance']}]")
    print(f"branch: {report.get('branch')}; "
          f"L2 distance = {report.get('distance_l2'):.6g}")
    return 0


def cmd_verify(client: _Client, args) -> int:
    status, body = client.post("/verify", {
        "config": _read_text(args.config),
        "base_dir": os.path.dirname(os.path.abspath(args.config)),
        "solution_csv": _read_text(args.solution)})
    if status != 200:
        return _fail_from_status(status, body)
    v = body["verification"]
    verdict = "PASS" if body["ok"] else "FAIL"
    print(f"{verdict}: residual = {v['residual']:.3e}, "
          f"L2 norm = {v['l2_norm']:.6g}, energy = {v['energy']:.12g}")
    return 0 if body["ok"] else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="robinred",
        description="solver for resonant semilinear Robin problems")
    p.add_argument("--url", default=None,
                   help="remote service URL (default: run in-process)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="eigenvalue table and certificates")
    sp.add_argument("config")
    sp = sub.add_parser("check-f", help="audit the reaction hypotheses")
    sp.add_argument("config")
    sp = sub.add_parser("solve", help="find and verify two nontrivial solutions")
    sp.add_argument("config")
    sp = sub.add_parser("verify", help="verify a solution CSV in weak form")
    sp.add_argument("config")
    sp.add_argument("solution")
    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    client = _Client(args.url)
    if args.command == "spectrum":
        return cmd_spectrum(client, args)
    if args.command == "check-f":
        return cmd_check_f(client, args)
    if args.command == "solve":
        return cmd_solve(client, args)
    if args.command == "verify":
        return cmd_verify(client, args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
