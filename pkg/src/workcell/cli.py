"""Command line entry points: full-system run, training, corpus, replay."""

from __future__ import annotations

import argparse
import json
import random
import signal
import sys
from typing import Optional

from . import agent as agent_mod
from .agent import LearnConfig, QTable, bootstrap_phase2, train_phase1
from .affect import BusRewardSource, PreferenceProfile, SimulatedHuman
from .bus import Broker, dumps_canonical, load_log
from .eeg import make_corpus, save_corpus, train_default_classifier, load_corpus
from .runtime import Runtime, replay_panels
from .scenario import Scenario, ScenarioError, load_scenario, load_script
from .world import Domain, RewardConfig

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="workcell", description="simulated shared-workcell system"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="start the full system")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--port", type=int, default=8733)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--headless", action="store_true", help="no HTTP, simulated time")
    run.add_argument("--script", help="timed claims/blinks/overrides JSON")
    run.add_argument("--duration-s", type=float, default=20.0, help="headless run length")
    run.add_argument("--log", help="event log path (JSON lines)")
    run.add_argument("--log-sync", action="store_true", help="flush log per message")
    run.add_argument("--corpus", help="labeled EEG corpus to train the classifier from")
    run.add_argument("--console", help="static directory served at / for the dashboard")
    run.add_argument("--panels-out", help="write the final panel snapshot JSON here")

    train = sub.add_parser("train", help="train the learning agent")
    train.add_argument("--phase", type=int, choices=(1, 2), required=True)
    train.add_argument("--episodes", type=int, default=3000)
    train.add_argument("--seed", type=int, default=1)
    train.add_argument("--out", default="qtable.json")
    train.add_argument("--trace", default="trace.jsonl")
    train.add_argument("--init", help="phase-1 table to bootstrap from (phase 2)")
    train.add_argument("--profile", help="simulated human, e.g. prefers_green")
    train.add_argument(
        "--coverage",
        action="store_true",
        help="constant full exploration for a broadly converged table",
    )
    train.add_argument("--scenario", help="scenario JSON for rewards/blocks")

    corpus = sub.add_parser("corpus", help="generate the labeled EEG corpus")
    corpus.add_argument("--out", required=True)
    corpus.add_argument("--blink", type=int, default=100)
    corpus.add_argument("--background", type=int, default=100)
    corpus.add_argument("--seed", type=int, default=None)

    replay = sub.add_parser("replay", help="re-drive console panels from a log")
    replay.add_argument("--log", required=True)
    replay.add_argument("--from-seq", type=int, default=0)
    replay.add_argument("--panels", help="panel snapshot to byte-compare against")
    replay.add_argument("--out", help="write the reconstructed snapshot here")

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    script = None
    if args.script:
        try:
            script = load_script(args.script)
        except (ScenarioError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    classifier = None
    if args.corpus:
        classifier = train_default_classifier(load_corpus(args.corpus))
    runtime = Runtime(
        scenario,
        seed=args.seed,
        log_path=args.log,
        log_sync=args.log_sync,
        classifier=classifier,
        script=script,
    )
    if args.headless:
        runtime.run_headless(int(args.duration_s * 1000))
        runtime.shutdown()
        if args.panels_out:
            with open(args.panels_out, "w", encoding="utf-8") as fh:
                fh.write(dumps_canonical(runtime.panels()))
        print(f"headless run complete: {len(runtime.broker.log)} events logged")
        return EXIT_OK

    try:
        server = runtime.serve(args.port, static_root=args.console, autostart=True)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"gateway on http://127.0.0.1:{server.port} (Ctrl-C to stop)")
    stopped = {"flag": False}

    def handle_sigint(signum, frame):
        stopped["flag"] = True

    signal.signal(signal.SIGINT, handle_sigint)
    try:
        while not stopped["flag"]:
            signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    server.stop()
    runtime.shutdown()
    if args.panels_out:
        with open(args.panels_out, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(runtime.panels()))
    print(f"shut down cleanly: {len(runtime.broker.log)} events logged")
    return EXIT_OK


def _parse_profile(text: Optional[str], scenario: Scenario) -> PreferenceProfile:
    if not text:
        return scenario.profile
    if text.startswith("prefers_"):
        block = text[len("prefers_") :]
        if block not in scenario.blocks:
            raise ScenarioError(f"profile block {block!r} not in scenario")
        return PreferenceProfile(preferred_block=block)
    raise ScenarioError(f"unknown profile {text!r} (expected prefers_<block>)")


def _cmd_train(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else Scenario()
    domain = scenario.domain()
    rewards = scenario.rewards
    cfg = LearnConfig(episodes=args.episodes)
    if args.coverage:
        cfg.epsilon_end = 1.0
    rng = random.Random(args.seed)

    if args.phase == 1:
        result = train_phase1(domain, cfg, rewards, rng)
    else:
        if not args.init:
            print("error: --phase 2 requires --init <qtable.json>", file=sys.stderr)
            return EXIT_USAGE
        try:
            profile = _parse_profile(args.profile, scenario)
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        q0 = QTable.load(args.init)
        broker = Broker()
        human = SimulatedHuman(broker, profile, scenario.weights)
        source = BusRewardSource(human)
        result = bootstrap_phase2(q0, source, cfg, rewards, domain, rng)
        broker.close()

    result.qtable.save(args.out)
    result.write_trace(args.trace)
    conv = result.converged_episode
    final_len = result.greedy_lengths[-1] if result.greedy_lengths else None
    print(
        f"phase {args.phase}: episodes={len(result.episodes)} "
        f"converged_episode={conv} final_greedy_len={final_len} "
        f"table_entries={len(result.qtable)}"
    )
    if args.phase == 1 and args.episodes > 0 and not result.converged:
        print("warning: policy did not converge within the episode budget")
    return EXIT_OK


def _cmd_corpus(args: argparse.Namespace) -> int:
    kwargs = {"n_blink": args.blink, "n_background": args.background}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    corpus = make_corpus(**kwargs)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} labeled windows to {args.out}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        records = load_log(args.log)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.from_seq:
        records = [r for r in records if r["seq"] >= args.from_seq]
    panels = replay_panels(records)
    rendered = dumps_canonical(panels)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(rendered)
    if args.panels:
        with open(args.panels, encoding="utf-8") as fh:
            expected = fh.read()
        if rendered == expected:
            print(f"replayed {len(records)} records: panels identical")
            return EXIT_OK
        print("panel mismatch after replay", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"replayed {len(records)} records over {len(set(r['queue'] for r in records))} queues")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "corpus":
            return _cmd_corpus(args)
        if args.command == "replay":
            return _cmd_replay(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
