"""Command-line entry point for the whole lifecycle.

Subcommands: synth, train-encoder, fit-responses, fit-simulator,
train-policy, eval, curve, serve, interact. Exit codes: 0 ok, 1 usage,
2 data error, 3 runtime failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .belief import ResponseModel, count_responses, load_responses, save_responses
from .dataset import DataError, load_corpus, save_corpus, synth_corpus
from .encoder import TrainConfig, load_encoder, save_encoder, train_encoder
from .evaluation import (
    Engine,
    FixedStop,
    PolicyStop,
    SuiteConfig,
    ThresholdStop,
    accuracy_vs_turns,
    confusion_matrix,
    evaluate_suite,
    run_strategy,
    write_confusion_csv,
    write_curve_csv,
    write_report_csv,
    write_report_json,
)
from .policy import (
    PolicyTrainConfig,
    RewardConfig,
    load_policy,
    save_policy,
    train_policy,
    write_training_log,
)
from .simulator import fit_simulator, load_simulator, save_simulator


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file of per-subcommand option defaults (flags and env win).",
)
@click.pass_context
def cli(ctx, config):
    """Interactive classification: data, training, evaluation, serving."""
    if config:
        ctx.default_map = json.loads(Path(config).read_text(encoding="utf-8"))


@cli.command()
@click.option("--labels", "n_labels", type=int, required=True, help="Catalog size.")
@click.option("--attrs", type=int, required=True, help="Number of binary attributes.")
@click.option("--noise", type=float, default=0.0, show_default=True, help="Annotation flip rate.")
@click.option("--records", type=int, default=3, show_default=True, help="Records per label.")
@click.option("--queries", type=int, default=2, show_default=True, help="Queries per record.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def synth(n_labels, attrs, noise, records, queries, seed, out):
    """Generate a synthetic attribute world on disk."""
    corpus = synth_corpus(n_labels, attrs, noise, seed, n_records=records, n_queries=queries)
    save_corpus(corpus, out)
    click.echo(f"wrote {corpus.n_labels} labels, {len(corpus.questions)} questions, "
               f"{len(corpus.records)} records to {out}")


@cli.command("train-encoder")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--epochs", type=int, default=40, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--lr", type=float, default=0.3, show_default=True)
@click.option("--negatives", type=int, default=8, show_default=True)
@click.option("--augment", type=float, default=0.25, show_default=True)
@click.option("--dim", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train_encoder_cmd(data, out, epochs, batch_size, lr, negatives, augment, dim, seed):
    """Train the shared text encoder on the train split's annotations."""
    corpus = load_corpus(data)
    cfg = TrainConfig(
        epochs=epochs, batch_size=batch_size, learning_rate=lr,
        negatives_per_batch=negatives, augmentation_rate=augment, d=dim, seed=seed,
    )
    model = train_encoder(corpus, cfg)
    save_encoder(model, out)
    click.echo(f"wrote encoder ({len(model.vocab)} tokens, d={model.d}) to {out}")


@cli.command("fit-responses")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--lam", "--lambda", "lam", type=float, default=0.5, show_default=True,
              help="Weight of the empirical term in the mixture.")
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--scope", type=click.Choice(["all", "train"]), default="all", show_default=True,
              help="Which labels' records feed the empirical counts.")
def fit_responses(data, encoder_path, out, lam, alpha, scope):
    """Fit the answer likelihood model p(r|q,y)."""
    corpus = load_corpus(data)
    enc = load_encoder(encoder_path) if encoder_path else None
    if enc is None and lam < 1.0:
        raise DataError("the mixture needs an encoder unless --lam is 1.0")
    label_ids = corpus.split.train if scope == "train" else None
    rm = ResponseModel(corpus, enc, lam=lam, alpha=alpha,
                       counts=count_responses(corpus, label_ids))
    save_responses(rm, out)
    click.echo(f"wrote response model ({len(rm.counts)} observed pairs) to {out}")


@cli.command("fit-simulator")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--split", type=click.Choice(["dev", "test"]), default="dev", show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
def fit_simulator_cmd(data, out, split, alpha):
    """Fit the held-out user simulator p'(r|q,y)."""
    corpus = load_corpus(data)
    label_ids = corpus.split.dev if split == "dev" else corpus.split.test
    sim = fit_simulator(corpus, label_ids, alpha=alpha,
                        encoder_train_labels=corpus.split.train)
    save_simulator(sim, out)
    click.echo(f"wrote simulator ({len(sim.label_ids)} labels, split {split}) to {out}")


@cli.command("train-policy")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--responses", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--simulator", "simulator_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="Training log CSV (episode, mean_return, mean_turns, accuracy).")
@click.option("--episodes", type=int, default=6000, show_default=True)
@click.option("--batch", type=int, default=400, show_default=True,
              help="Trials per log row and per w,b update.")
@click.option("--update-batch", type=int, default=100, show_default=True,
              help="Episodes per policy gradient step.")
@click.option("--lr", type=float, default=0.05, show_default=True)
@click.option("--wb-lr", type=float, default=0.01, show_default=True)
@click.option("--turn-penalty", type=float, default=-0.5, show_default=True)
@click.option("--correct-reward", type=float, default=20.0, show_default=True)
@click.option("--wrong-reward", type=float, default=-10.0, show_default=True)
@click.option("--baseline-decay", type=float, default=0.95, show_default=True)
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--max-turns", type=int, default=10, show_default=True)
@click.option("--hidden", type=int, default=32, show_default=True)
@click.option("--uniform-prior", is_flag=True, default=False,
              help="Train without conditioning on the initial query.")
@click.option("--no-wb", is_flag=True, default=False, help="Freeze w,b during training.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Accepted for interface stability; rollouts use per-episode "
                   "RNG streams so results do not depend on it.")
def train_policy_cmd(data, encoder_path, responses, simulator_path, out, log_path,
                     episodes, batch, update_batch, lr, wb_lr, turn_penalty,
                     correct_reward, wrong_reward, baseline_decay, k, max_turns,
                     hidden, uniform_prior, no_wb, seed, jobs):
    """Train the STOP/ASK controller against the simulator."""
    corpus = load_corpus(data)
    enc = load_encoder(encoder_path) if encoder_path else None
    rm = load_responses(responses, corpus, enc)
    sim = load_simulator(simulator_path, corpus)
    rewards = RewardConfig(correct=correct_reward, wrong=wrong_reward, turn_penalty=turn_penalty)
    cfg = PolicyTrainConfig(
        episodes=episodes, batch_episodes=update_batch, report_every=batch,
        learning_rate=lr, wb_learning_rate=wb_lr,
        baseline_decay=baseline_decay, update_wb=not no_wb, k=k, max_turns=max_turns,
        hidden=hidden, seed=seed, jobs=jobs, uniform_prior=uniform_prior,
    )
    policy, w, b, rows = train_policy(corpus, enc, rm, sim, rewards, cfg)
    save_policy(policy, out, w=w, b=b)
    if log_path:
        write_training_log(rows, log_path)
    last = rows[-1] if rows else {"mean_return": 0.0, "mean_turns": 0.0, "accuracy": 0.0}
    click.echo(f"wrote policy to {out} (final window: return {last['mean_return']:.2f}, "
               f"turns {last['mean_turns']:.2f}, accuracy {last['accuracy']:.3f})")


def _load_engine(data, encoder_path, responses_path, policy_path):
    corpus = load_corpus(data)
    enc = load_encoder(encoder_path) if encoder_path else None
    rm = load_responses(responses_path, corpus, enc)
    policy = None
    if policy_path:
        policy, w, b = load_policy(policy_path)
        if enc is not None:
            rm = rm.with_wb(w, b)  # fine-tuned scalars travel with the policy
    return Engine(corpus, enc, rm, policy)


def _termination_for(engine, fixed, threshold, max_turns):
    if engine.policy is not None:
        return PolicyStop(engine.policy)
    if threshold is not None:
        return ThresholdStop(threshold, max_turns)
    if fixed is not None:
        return FixedStop(fixed)
    return ThresholdStop(0.9, max_turns)


def _parse_ints(raw: str) -> list[int]:
    return [int(x) for x in raw.split(",") if x.strip() != ""]


def _parse_floats(raw: str) -> list[float]:
    return [float(x) for x in raw.split(",") if x.strip() != ""]


@cli.command("eval")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--responses", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--simulator", "simulator_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--suite", default="full,no_initial_query,random,no_interaction", show_default=True,
              help="Comma list; parametrized forms like fixed:1, random:5, threshold:0.9 work.")
@click.option("--episodes", type=int, default=500, show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--random-turns", type=int, default=5, show_default=True)
@click.option("--threshold", type=float, default=0.9, show_default=True)
@click.option("--fixed-turns", type=int, default=4, show_default=True)
@click.option("--max-turns", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report JSON path.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.option("--confusion", "confusion_path", type=click.Path(dir_okay=False), default=None,
              help="Confusion matrix CSV for the first listed strategy.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Accepted for interface stability; per-episode RNG streams "
                   "keep results order-independent.")
def eval_cmd(data, encoder_path, responses, policy_path, simulator_path, suite, episodes,
             seeds, random_turns, threshold, fixed_turns, max_turns, out, csv_path,
             confusion_path, jobs):
    """Run baseline strategies and report Accuracy@k over seeds."""
    engine = _load_engine(data, encoder_path, responses, policy_path)
    sim = load_simulator(simulator_path, engine.corpus)
    cfg = SuiteConfig(
        strategies=[s.strip() for s in suite.split(",") if s.strip()],
        episodes=episodes, seeds=_parse_ints(seeds), random_turns=random_turns,
        threshold=threshold, fixed_turns=fixed_turns, max_turns=max_turns,
    )
    reports = evaluate_suite(engine, sim, cfg)
    for r in reports:
        click.echo(f"{r.strategy:>20}  acc@1 {r.acc1_mean:.3f} ± {r.acc1_std:.3f}  "
                   f"acc@3 {r.acc3_mean:.3f} ± {r.acc3_std:.3f}  turns {r.mean_turns:.2f}")
    if out:
        write_report_json(reports, out)
    if csv_path:
        write_report_csv(reports, csv_path)
    if confusion_path and cfg.strategies:
        ts = []
        for seed in cfg.seeds:
            ts.extend(run_strategy(cfg.strategies[0], engine, sim, seed, cfg.episodes, cfg))
        write_confusion_csv(confusion_matrix(ts, engine.corpus), engine.corpus, confusion_path)


@cli.command()
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--responses", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--simulator", "simulator_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--fixed", default="0,1,2,4,6", show_default=True, help="Fixed-turn grid.")
@click.option("--thresholds", default="", show_default=True, help="Belief threshold grid.")
@click.option("--episodes", type=int, default=300, show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--max-turns", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def curve(data, encoder_path, responses, policy_path, simulator_path, fixed, thresholds,
          episodes, seeds, max_turns, out):
    """Accuracy-versus-turns curve points as CSV."""
    engine = _load_engine(data, encoder_path, responses, policy_path)
    sim = load_simulator(simulator_path, engine.corpus)
    cfg = SuiteConfig(episodes=episodes, seeds=_parse_ints(seeds), max_turns=max_turns)
    points = accuracy_vs_turns(
        engine, sim, cfg,
        fixed_grid=_parse_ints(fixed) if fixed else [],
        threshold_grid=_parse_floats(thresholds) if thresholds else [],
        include_policy=engine.policy is not None,
    )
    write_curve_csv(points, out)
    click.echo(f"wrote {len(points)} curve points to {out}")


@cli.command()
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--responses", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--fixed", type=int, default=None, help="Stop after this many turns.")
@click.option("--threshold", type=float, default=None, help="Stop at this belief mass.")
@click.option("--max-turns", type=int, default=10, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True, envvar="CLARQ_HOST")
@click.option("--port", type=int, default=8000, show_default=True, envvar="CLARQ_PORT")
@click.option("--log-dir", type=click.Path(file_okay=False), default="transcripts",
              show_default=True, envvar="CLARQ_LOG_DIR")
@click.option("--ttl", type=float, default=1800.0, show_default=True, envvar="CLARQ_TTL",
              help="Idle session lifetime in seconds.")
@click.option("--seed", type=int, default=0, show_default=True)
def serve(data, encoder_path, responses, policy_path, fixed, threshold, max_turns,
          host, port, log_dir, ttl, seed):
    """Serve the interaction loop over HTTP."""
    import uvicorn

    from .service import create_app

    engine = _load_engine(data, encoder_path, responses, policy_path)
    termination = _termination_for(engine, fixed, threshold, max_turns)
    app = create_app(engine, termination, log_dir=log_dir, ttl_seconds=ttl, seed=seed)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command()
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--responses", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--fixed", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--max-turns", type=int, default=10, show_default=True)
def interact(data, encoder_path, responses, policy_path, fixed, threshold, max_turns):
    """Run one session in the terminal with you as the responder."""
    from .belief import init_belief, predict, top_k, update_belief
    from .dataset import NOT_VISIBLE
    from .selection import select_question

    engine = _load_engine(data, encoder_path, responses, policy_path)
    termination = _termination_for(engine, fixed, threshold, max_turns)
    query = click.prompt("Your query")
    state = engine.initial_belief(query)
    turn = 0
    while not termination.stop(state, turn, engine):
        question = select_question(state, engine.corpus, engine.rm)
        if question is None:
            break
        options = list(question.answers)
        if question.group is not None:
            options.append(NOT_VISIBLE)
        click.echo(f"\n{question.text}")
        for i, opt in enumerate(options, start=1):
            click.echo(f"  {i}. {opt}")
        choice = click.prompt("Answer", type=click.IntRange(1, len(options)))
        state = update_belief(state, question, options[choice - 1], engine.rm)
        turn += 1
    click.echo("\nBest matches:")
    for lid, p in top_k(state, engine.corpus, min(3, engine.corpus.n_labels)):
        if lid:
            click.echo(f"  {p:6.3f}  {lid}  {engine.corpus.label(lid).text}")
    click.echo(f"Prediction: {predict(state, engine.corpus)} after {turn} turn(s)")


def main(argv=None) -> int:
    """Entry point with the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return int(exc.exit_code)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.FileError as exc:
        click.echo(f"data error: {exc.format_message()}", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 3
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        click.echo(f"error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
