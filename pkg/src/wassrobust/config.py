"""Flat key-value experiment configuration.

One `section.key = value` assignment per line; `#` starts a comment and
blank lines are ignored. Validation is total: every problem in the file
is collected and reported in one error, so a bad config never starts a
partial run.
"""

from dataclasses import dataclass
from typing import List, Optional

from .attacks import AttackConfig
from .errors import ConfigurationError
from .models import make_regularizer
from .robust import RobustConfig
from .trainers import ALGORITHMS, SCHEDULES, TrainerConfig

DATASET_KINDS = ("two-gaussians", "two-moons", "linear-regression", "idx", "csv")
MODEL_KINDS = ("logistic", "linear-least-squares", "tiny-mlp")
ATTACK_KINDS = ("none", "fgsm", "ifgsm", "pgd", "wrm")
REG_KINDS = ("none", "l1", "squared-l2")
PARTITION_SCHEMES = ("iid", "one-class-per-worker")


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _str(text):
    return text


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError("expected one of %s" % ", ".join(options))
        return text
    return parse


# key -> (parser, default); None default means "may stay unset"
SCHEMA = {
    "seed": (_int, 0),
    "run.name": (_str, "exp"),
    "output.path": (_str, "metrics.csv"),
    "output.params": (_str, None),
    "dataset.kind": (_choice(DATASET_KINDS), "two-gaussians"),
    "dataset.n": (_int, 200),
    "dataset.d": (_int, 2),
    "dataset.noise": (_float, 0.1),
    "dataset.seed": (_int, None),
    "dataset.images": (_str, None),
    "dataset.labels": (_str, None),
    "dataset.limit": (_int, None),
    "dataset.path": (_str, None),
    "dataset.label_column": (_str, "label"),
    "dataset.delimiter": (_str, ","),
    "model.kind": (_choice(MODEL_KINDS), "logistic"),
    "model.hidden": (_int, 8),
    "trainer.algorithm": (_str, "spgda"),
    "trainer.alpha": (_float, 0.001),
    "trainer.eta": (_float, 0.02),
    "trainer.batch_size": (_int, 128),
    "trainer.iters": (_int, 1000),
    "trainer.stride": (_int, 50),
    "trainer.schedule": (_choice(SCHEDULES), "constant"),
    "trainer.wrm_gamma": (_float, 1.0),
    "robust.rho": (_float, 25.0),
    "robust.gamma0": (_float, 1.0),
    "robust.oracle_eps": (_float, 1e-6),
    "robust.oracle_step": (_float, 0.02),
    "robust.oracle_max_iters": (_int, 1000),
    "attack.kind": (_choice(ATTACK_KINDS), "pgd"),
    "attack.eps_adv": (_float, 0.1),
    "attack.steps": (_int, 10),
    "attack.alpha_atk": (_float, None),
    "attack.clip_lo": (_float, -1.0),
    "attack.clip_hi": (_float, 1.0),
    "attack.wrm_gamma": (_float, 1.0),
    "reg.kind": (_choice(REG_KINDS), "none"),
    "reg.beta": (_float, 0.0),
    "federated.workers": (_int, 0),
    "federated.scheme": (_choice(PARTITION_SCHEMES), "iid"),
    "federated.local_epochs": (_int, 1),
}


def parse_config(text, source="<config>"):
    """Text to a raw key -> string map, collecting every syntax problem."""
    pairs = {}
    errors = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append("%s:%d: expected `key = value`" % (source, lineno))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            errors.append("%s:%d: missing key" % (source, lineno))
        elif key in pairs:
            errors.append("%s:%d: duplicate key %r" % (source, lineno, key))
        else:
            pairs[key] = value
    if errors:
        raise ConfigurationError("\n".join(errors))
    return pairs


@dataclass
class ExperimentConfig:
    seed: int
    run_name: str
    output_path: str
    params_path: Optional[str]
    dataset: dict
    model_kind: str
    model_hidden: int
    algorithms: List[str]
    trainer_kwargs: dict
    robust: RobustConfig
    attack: Optional[AttackConfig]
    reg: "Regularizer"
    federated_workers: int
    federated_scheme: str
    local_epochs: int

    def trainer_config(self, algorithm):
        return TrainerConfig(algorithm, robust=self.robust,
                             attack=self.attack, **self.trainer_kwargs)


def build_experiment(pairs, source="<config>"):
    """Validate a raw key map into an ExperimentConfig.

    Every unknown key, unparsable value, and inconsistent combination is
    reported together; nothing is built unless everything checks out.
    """
    errors = []
    values = {}
    for key, raw in pairs.items():
        if key not in SCHEMA:
            errors.append("%s: unknown key %r" % (source, key))
            continue
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(raw)
        except ValueError as exc:
            errors.append("%s: bad value for %s: %s" % (source, key, exc))
    for key, (_, default) in SCHEMA.items():
        values.setdefault(key, default)

    algorithms = [a.strip() for a in values["trainer.algorithm"].split(",")
                  if a.strip()]
    if not algorithms:
        errors.append("%s: trainer.algorithm names no algorithm" % source)
    for algo in algorithms:
        if algo not in ALGORITHMS:
            errors.append("%s: unknown algorithm %r" % (source, algo))
    if len(set(algorithms)) != len(algorithms):
        errors.append("%s: trainer.algorithm repeats an entry" % source)

    kind = values["dataset.kind"]
    if kind == "idx":
        for need in ("dataset.images", "dataset.labels"):
            if values[need] is None:
                errors.append("%s: dataset.kind=idx requires %s" % (source, need))
    if kind == "csv" and values["dataset.path"] is None:
        errors.append("%s: dataset.kind=csv requires dataset.path" % source)

    robust = attack = reg = None
    try:
        robust = RobustConfig(
            rho=values["robust.rho"], gamma0=values["robust.gamma0"],
            oracle_eps=values["robust.oracle_eps"],
            oracle_step=values["robust.oracle_step"],
            oracle_max_iters=values["robust.oracle_max_iters"])
    except ConfigurationError as exc:
        errors.append("%s: %s" % (source, exc))
    if values["attack.kind"] != "none":
        try:
            attack = AttackConfig(
                values["attack.kind"], eps_adv=values["attack.eps_adv"],
                steps=values["attack.steps"], alpha_atk=values["attack.alpha_atk"],
                clip_lo=values["attack.clip_lo"], clip_hi=values["attack.clip_hi"],
                wrm_gamma=values["attack.wrm_gamma"])
        except ConfigurationError as exc:
            errors.append("%s: %s" % (source, exc))
    elif "adv-train" in algorithms:
        errors.append("%s: adv-train training needs attack.kind" % source)
    try:
        reg = make_regularizer(values["reg.kind"], beta=values["reg.beta"])
    except ConfigurationError as exc:
        errors.append("%s: %s" % (source, exc))

    trainer_kwargs = dict(
        alpha=values["trainer.alpha"], eta=values["trainer.eta"],
        batch_size=values["trainer.batch_size"], iters=values["trainer.iters"],
        stride=values["trainer.stride"], schedule=values["trainer.schedule"],
        wrm_gamma=values["trainer.wrm_gamma"], seed=values["seed"])
    if robust is not None and not errors:
        for algo in algorithms:
            try:
                TrainerConfig(algo, robust=robust, attack=attack,
                              **trainer_kwargs)
            except ConfigurationError as exc:
                errors.append("%s: %s" % (source, exc))

    if values["federated.workers"] < 0:
        errors.append("%s: federated.workers must be >= 0" % source)
    if values["federated.local_epochs"] < 1:
        errors.append("%s: federated.local_epochs must be >= 1" % source)
    if values["federated.workers"] > 0:
        bad = [a for a in algorithms if a not in ("spgda", "erm")]
        if bad:
            errors.append(
                "%s: federated mode supports spgda (robust rounds) and erm "
                "(averaging baseline), not %s" % (source, ", ".join(bad)))

    if values["model.kind"] == "tiny-mlp" and values["model.hidden"] < 1:
        errors.append("%s: model.hidden must be >= 1" % source)

    if errors:
        raise ConfigurationError("\n".join(errors))

    dataset = {key.split(".", 1)[1]: values[key]
               for key in values if key.startswith("dataset.")}
    if dataset["seed"] is None:
        dataset["seed"] = values["seed"]
    return ExperimentConfig(
        seed=values["seed"], run_name=values["run.name"],
        output_path=values["output.path"], params_path=values["output.params"],
        dataset=dataset, model_kind=values["model.kind"],
        model_hidden=values["model.hidden"], algorithms=algorithms,
        trainer_kwargs=trainer_kwargs, robust=robust, attack=attack, reg=reg,
        federated_workers=values["federated.workers"],
        federated_scheme=values["federated.scheme"],
        local_epochs=values["federated.local_epochs"])


def load_experiment(path):
    with open(path) as fh:
        text = fh.read()
    return build_experiment(parse_config(text, source=path), source=path)
