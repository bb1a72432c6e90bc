"""Command-line front end.

The CLI is a thin HTTP client of the service layer: every command posts to
one endpoint and formats the response into files.  By default the service
runs in-process; ``--server`` points the same commands at a remote instance.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import sys
from pathlib import Path

import click

from . import __version__

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _post(client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code == 200:
        return response.json()
    detail = None
    try:
        detail = response.json().get("detail")
    except Exception:
        pass
    if isinstance(detail, dict) and detail.get("code") == "numerical":
        click.echo(f"numerical failure: {detail.get('message')}", err=True)
        sys.exit(EXIT_NUMERICAL)
    message = detail if detail is not None else response.text
    click.echo(f"request rejected ({response.status_code}): {message}", err=True)
    sys.exit(EXIT_CONFIG)


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else _fmt(cell) for cell in row])


def _read_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        click.echo(f"config file not found: {path}", err=True)
        sys.exit(EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        click.echo(f"config file is not valid JSON: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _write_manifest(out: Path, command: str, args: dict, seed) -> None:
    manifest = {
        "command": command,
        "args": args,
        "seed": seed,
        "engine_version": __version__,
        "created_utc": dt.datetime.now(dt.timezone.utc).isoformat(),
    }
    _write_json(out / "manifest.json", manifest)


def _digest_file(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _ensure_out(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Risk engine for a clearing house's default waterfall."""


def _run_calibrate(args: dict, server: str | None) -> None:
    out = _ensure_out(args["out"])
    try:
        with open(args["annual_csv"], newline="") as fh:
            matrix = [[float(cell) for cell in row] for row in csv.reader(fh) if row]
    except FileNotFoundError:
        click.echo(f"matrix file not found: {args['annual_csv']}", err=True)
        sys.exit(EXIT_CONFIG)
    except ValueError as exc:
        click.echo(f"matrix file is not numeric CSV: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    payload = {
        "matrix": matrix,
        "periods": args["periods"],
        "enforce_pattern": args["enforce_pattern"],
    }
    with _client(server) as client:
        result = _post(client, "/v1/calibrate", payload)
    _write_csv(
        out / "daily_matrix.csv",
        [f"s{j+1}" for j in range(len(result["matrix"]))],
        result["matrix"],
    )
    _write_json(
        out / "calibration_report.json",
        {
            "reconstruction_error": result["reconstruction_error"],
            "method": result["method"],
            "clipped_mass": result["clipped_mass"],
            "periods": args["periods"],
            "source": args["annual_csv"],
            "source_sha256": _digest_file(args["annual_csv"]),
        },
    )
    _write_manifest(out, "calibrate", args, seed=None)
    click.echo(
        f"calibrated {len(matrix)}x{len(matrix)} matrix via {result['method']}; "
        f"reconstruction error {result['reconstruction_error']:.3e}"
    )


@main.command()
@click.argument("annual_csv", type=str)
@click.option("-m", "--periods", type=int, default=252, show_default=True)
@click.option("--out", type=str, default="calibration-out", show_default=True)
@click.option("--pattern/--no-pattern", "enforce_pattern", default=True, show_default=True)
@click.option("--server", type=str, default=None, help="Remote service URL.")
def calibrate(annual_csv, periods, out, enforce_pattern, server) -> None:
    """Solve an annual transition matrix for its one-step root."""
    _run_calibrate(
        {
            "annual_csv": annual_csv,
            "periods": periods,
            "out": out,
            "enforce_pattern": enforce_pattern,
        },
        server,
    )


def _overrides(args: dict) -> dict:
    overrides = {}
    for key, target in (
        ("seed", "seed"),
        ("paths_migration", "paths_migration"),
        ("paths_reference", "paths_reference"),
    ):
        if args.get(key) is not None:
            overrides[target] = args[key]
    return overrides


def _run_im(args: dict, server: str | None) -> None:
    out = _ensure_out(args["out"])
    config = _read_config(args["config"])
    payload = {"config": config, "overrides": _overrides(args)}
    with _client(server) as client:
        result = _post(client, "/v1/im/study", payload)
    rows = []
    for measure in result["measures"]:
        for a_idx, alpha in enumerate(result["alphas"]):
            for member, value in enumerate(result["table"][measure][a_idx]):
                rows.append([measure, alpha, str(member), value])
    _write_csv(out / "im_table.csv", ["measure", "alpha", "member", "im"], rows)
    if args.get("emit_distributions"):
        _write_json(out / "distributions.json", result["distributions"])
    _write_manifest(out, "im", args, seed=config.get("seed"))
    click.echo(f"margin table written to {out / 'im_table.csv'}")


@main.command()
@click.argument("config", type=str)
@click.option("--out", type=str, default="im-out", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--emit-distributions", is_flag=True, default=False)
@click.option("--server", type=str, default=None)
def im(config, out, seed, emit_distributions, server) -> None:
    """Per-member initial margin table across the level grid."""
    _run_im(
        {"config": config, "out": out, "seed": seed, "emit_distributions": emit_distributions},
        server,
    )


def _run_df(args: dict, server: str | None) -> None:
    out = _ensure_out(args["out"])
    config = _read_config(args["config"])
    payload = {"config": config, "overrides": _overrides(args)}
    with _client(server) as client:
        result = _post(client, "/v1/df/study", payload)
    _write_json(out / "study_result.json", result)
    alphas = result["alphas"]
    betas = result["betas"]
    grid_rows = [[_fmt(a)] + [row[b] for b in range(len(betas))] for a, row in zip(alphas, result["ratio_grid"])]
    _write_csv(out / "ratio_grid.csv", ["alpha\\beta"] + [_fmt(b) for b in betas], grid_rows)
    cover_rows = [
        [
            betas[b],
            c["cover1"],
            c["cover2"],
            c["cover_all"],
            c["self_cover1"],
            c["self_cover2"],
        ]
        for b, c in enumerate(result["covers"])
    ]
    _write_csv(
        out / "cover.csv",
        ["beta", "cover1", "cover2", "cover_all", "self_cover1", "self_cover2"],
        cover_rows,
    )
    alloc_rows = []
    for b, per_member in enumerate(result["df_allocation"]):
        for member, value in enumerate(per_member):
            alloc_rows.append([betas[b], str(member), value])
    _write_csv(out / "allocation.csv", ["beta", "member", "df_contribution"], alloc_rows)
    member_rows = [
        [
            str(r["member"]),
            r["vm"],
            r["im"],
            r["df_contribution"],
            r["udf_mean"],
            r["ep_mean"],
            r["ep_max"],
            r["default_prob"],
        ]
        for r in result["member_rows"]
    ]
    _write_csv(
        out / "members.csv",
        ["member", "vm", "im", "df_contribution", "udf_mean", "ep_mean", "ep_max", "default_prob"],
        member_rows,
    )
    _write_manifest(out, "df", args, seed=result["seed"])
    primary = result["df_total"]["0"][0]
    click.echo(
        f"fund study complete: {result['paths_migration']} migration x "
        f"{result['paths_reference']} reference paths; df[alpha0,beta0]={primary:.6g}"
    )


@main.command()
@click.argument("config", type=str)
@click.option("--out", type=str, default="df-out", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--paths-migration", type=int, default=None)
@click.option("--paths-reference", type=int, default=None)
@click.option("--server", type=str, default=None)
def df(config, out, seed, paths_migration, paths_reference, server) -> None:
    """Run the default-fund study: sizing, allocation, covers, ratios."""
    _run_df(
        {
            "config": config,
            "out": out,
            "seed": seed,
            "paths_migration": paths_migration,
            "paths_reference": paths_reference,
        },
        server,
    )


def _run_scaling(args: dict, server: str | None) -> None:
    out = _ensure_out(args["out"])
    config = _read_config(args["config"])
    try:
        counts = [int(c) for c in str(args["counts"]).split(",") if c.strip()]
    except ValueError:
        click.echo(f"invalid member counts: {args['counts']}", err=True)
        sys.exit(EXIT_CONFIG)
    if not counts:
        click.echo("no member counts given", err=True)
        sys.exit(EXIT_CONFIG)
    payload = {"config": config, "member_counts": counts, "overrides": _overrides(args)}
    with _client(server) as client:
        result = _post(client, "/v1/scaling/study", payload)
    rows = [
        [
            str(r["member_count"]),
            r["df_total"],
            r["im_total"],
            r["df_im_ratio"],
            r["c1_ratio"],
            r["c2_ratio"],
        ]
        for r in result["rows"]
    ]
    _write_csv(
        out / "scaling.csv",
        ["member_count", "df_total", "im_total", "df_im_ratio", "c1_ratio", "c2_ratio"],
        rows,
    )
    _write_json(out / "scaling_result.json", result)
    _write_manifest(out, "scaling", args, seed=config.get("seed"))
    click.echo(f"scaling study written to {out / 'scaling.csv'}")


@main.command()
@click.argument("config", type=str)
@click.option("--counts", type=str, required=True, help="Comma-separated member counts.")
@click.option("--out", type=str, default="scaling-out", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--server", type=str, default=None)
def scaling(config, counts, out, seed, server) -> None:
    """Fund-to-margin scaling across member counts."""
    _run_scaling({"config": config, "counts": counts, "out": out, "seed": seed}, server)


_RUNNERS = {"calibrate": _run_calibrate, "im": _run_im, "df": _run_df, "scaling": _run_scaling}


@main.command()
@click.argument("manifest", type=str)
@click.option("--server", type=str, default=None)
def replay(manifest, server) -> None:
    """Re-run the command recorded in a manifest; outputs are reproduced."""
    try:
        data = json.loads(Path(manifest).read_text())
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        click.echo(f"cannot read manifest: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    runner = _RUNNERS.get(data.get("command"))
    if runner is None:
        click.echo(f"manifest names unknown command {data.get('command')!r}", err=True)
        sys.exit(EXIT_CONFIG)
    runner(data["args"], server)


@main.command()
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
