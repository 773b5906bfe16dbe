"""First-order optimizers and the epoch-based learning-rate schedule.

Update rules follow the standard published forms (the ones PyTorch
implements). ``g`` is the gradient after optional L2 weight decay
(``g + wd * w``), ``t`` the 1-based step count:

SGD       b <- mu * b + g (b = g on the first step);  w <- w - lr * b
ASGD      eta = lr / (1 + lambd * lr * (t - 1)) ** alpha
          w <- w * (1 - lambd * eta) - eta * g
          ax <- w while t <= t0 + 1, else ax + (w - ax) / (t - t0)
Adadelta  s <- rho * s + (1 - rho) g^2
          d = sqrt(a + eps) / sqrt(s + eps) * g;  a <- rho * a + (1 - rho) d^2
          w <- w - lr * d
Adagrad   S <- S + g^2;  w <- w - lr / (1 + (t - 1) * lr_decay) * g / (sqrt(S) + eps)
Adam      m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
          w <- w - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
Adamax    m as Adam;  u <- max(b2 u, |g| + eps);  w <- w - lr / (1 - b1^t) * m / u
AdamW     w <- w * (1 - lr * wd), then the Adam update with the raw gradient
RMSprop   v <- alpha v + (1 - alpha) g^2  (centered: divide by v - mean(g)^2)
          w <- w - lr * g / (sqrt(v) + eps), optionally through a momentum buffer
"""

import numpy as np

from .errors import ConfigError, ShapeError


class Optimizer:
    kind = None
    defaults = {}

    def __init__(self, **hyper):
        unknown = set(hyper) - set(self.defaults)
        if unknown:
            raise ConfigError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        self.hyper = {**self.defaults, **hyper}
        if isinstance(self.hyper.get("betas"), list):
            self.hyper["betas"] = tuple(self.hyper["betas"])
        self.check()
        self.step_count = 0
        self.slots = None

    def check(self):
        wd = self.hyper.get("weight_decay", 0.0)
        if wd < 0:
            raise ConfigError(f"{self.kind}: weight_decay must be >= 0, got {wd}")
        eps = self.hyper.get("eps")
        if eps is not None and eps < 0:
            raise ConfigError(f"{self.kind}: eps must be >= 0, got {eps}")

    def init_slots(self, w):
        return {}

    def step(self, params, grads, lr):
        """Update ``params`` in place (and return them)."""
        params = list(params)
        grads = list(grads)
        if len(params) != len(grads):
            raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
        for w, g in zip(params, grads):
            if w.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter {w.shape}")
        if not lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        if self.slots is None:
            self.slots = [self.init_slots(w) for w in params]
        elif len(self.slots) != len(params):
            raise ShapeError("parameter list changed between steps")
        self.step_count += 1
        for w, g, slot in zip(params, grads, self.slots):
            self.update(w, np.asarray(g, dtype=w.dtype), slot, lr)
        return params

    def _decayed(self, w, g):
        wd = self.hyper.get("weight_decay", 0.0)
        return g + wd * w if wd else g

    def state_dict(self):
        return {"kind": self.kind, "hyper": dict(self.hyper), "step_count": self.step_count}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.hyper.items())
        return f"{type(self).__name__}({args})"


def _check_beta(kind, name, value):
    if not 0 <= value < 1:
        raise ConfigError(f"{kind}: {name} must be in [0, 1), got {value}")


class SGD(Optimizer):
    kind = "SGD"
    defaults = {"momentum": 0.9, "dampening": 0.0, "weight_decay": 0.0, "nesterov": False}

    def check(self):
        super().check()
        _check_beta(self.kind, "momentum", self.hyper["momentum"])

    def init_slots(self, w):
        return {"momentum_buffer": np.zeros_like(w)}

    def update(self, w, g, slot, lr):
        g = self._decayed(w, g)
        mu = self.hyper["momentum"]
        if mu:
            buf = slot["momentum_buffer"]
            if self.step_count == 1:
                buf[...] = g
            else:
                buf *= mu
                buf += (1 - self.hyper["dampening"]) * g
            g = g + mu * buf if self.hyper["nesterov"] else buf
        w -= lr * g


class ASGD(Optimizer):
    kind = "ASGD"
    defaults = {"lambd": 1e-4, "alpha": 0.75, "t0": 1e6, "weight_decay": 0.0}

    def check(self):
        super().check()
        if self.hyper["lambd"] < 0 or self.hyper["alpha"] < 0 or self.hyper["t0"] < 0:
            raise ConfigError(f"ASGD: lambd, alpha and t0 must be >= 0, got {self.hyper}")

    def init_slots(self, w):
        return {"ax": np.zeros_like(w)}

    def eta(self, lr):
        h = self.hyper
        return lr / (1 + h["lambd"] * lr * (self.step_count - 1)) ** h["alpha"]

    def update(self, w, g, slot, lr):
        h = self.hyper
        g = self._decayed(w, g)
        eta = self.eta(lr)
        w *= 1 - h["lambd"] * eta
        w -= eta * g
        mu = 1.0 / max(1.0, self.step_count - h["t0"])
        if mu == 1:
            slot["ax"][...] = w
        else:
            slot["ax"] += (w - slot["ax"]) * mu


class Adadelta(Optimizer):
    kind = "Adadelta"
    defaults = {"rho": 0.9, "eps": 1e-6, "weight_decay": 0.0}

    def check(self):
        super().check()
        if not 0 <= self.hyper["rho"] <= 1:
            raise ConfigError(f"Adadelta: rho must be in [0, 1], got {self.hyper['rho']}")

    def init_slots(self, w):
        return {"square_avg": np.zeros_like(w), "acc_delta": np.zeros_like(w)}

    def update(self, w, g, slot, lr):
        rho, eps = self.hyper["rho"], self.hyper["eps"]
        g = self._decayed(w, g)
        sq, acc = slot["square_avg"], slot["acc_delta"]
        sq *= rho
        sq += (1 - rho) * g * g
        delta = np.sqrt(acc + eps) / np.sqrt(sq + eps) * g
        acc *= rho
        acc += (1 - rho) * delta * delta
        w -= lr * delta


class Adagrad(Optimizer):
    kind = "Adagrad"
    defaults = {"lr_decay": 0.0, "weight_decay": 0.0, "initial_accumulator_value": 0.0, "eps": 1e-10}

    def check(self):
        super().check()
        if self.hyper["lr_decay"] < 0 or self.hyper["initial_accumulator_value"] < 0:
            raise ConfigError("Adagrad: lr_decay and initial_accumulator_value must be >= 0")

    def init_slots(self, w):
        return {"sum": np.full_like(w, self.hyper["initial_accumulator_value"])}

    def update(self, w, g, slot, lr):
        g = self._decayed(w, g)
        clr = lr / (1 + (self.step_count - 1) * self.hyper["lr_decay"])
        slot["sum"] += g * g
        w -= clr * g / (np.sqrt(slot["sum"]) + self.hyper["eps"])


class Adam(Optimizer):
    kind = "Adam"
    defaults = {"betas": (0.9, 0.999), "eps": 1e-8, "weight_decay": 0.0}

    def check(self):
        super().check()
        betas = self.hyper["betas"]
        if len(betas) != 2:
            raise ConfigError(f"{self.kind}: betas must be a pair, got {betas}")
        _check_beta(self.kind, "beta1", betas[0])
        _check_beta(self.kind, "beta2", betas[1])

    def init_slots(self, w):
        return {"exp_avg": np.zeros_like(w), "exp_avg_sq": np.zeros_like(w)}

    def _adam(self, w, g, slot, lr):
        b1, b2 = self.hyper["betas"]
        t = self.step_count
        m, v = slot["exp_avg"], slot["exp_avg_sq"]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        w -= lr * m_hat / (np.sqrt(v_hat) + self.hyper["eps"])

    def update(self, w, g, slot, lr):
        self._adam(w, self._decayed(w, g), slot, lr)


class AdamW(Adam):
    kind = "AdamW"
    defaults = {"betas": (0.9, 0.999), "eps": 1e-8, "weight_decay": 0.01, "amsgrad": False}

    def check(self):
        super().check()
        if self.hyper["amsgrad"]:
            raise ConfigError("AdamW: amsgrad is not supported")

    def update(self, w, g, slot, lr):
        w *= 1 - lr * self.hyper["weight_decay"]
        self._adam(w, g, slot, lr)


class Adamax(Adam):
    kind = "Adamax"
    defaults = {"betas": (0.9, 0.999), "eps": 1e-8, "weight_decay": 0.0}

    def init_slots(self, w):
        return {"exp_avg": np.zeros_like(w), "exp_inf": np.zeros_like(w)}

    def update(self, w, g, slot, lr):
        b1, b2 = self.hyper["betas"]
        g = self._decayed(w, g)
        m, u = slot["exp_avg"], slot["exp_inf"]
        m *= b1
        m += (1 - b1) * g
        np.maximum(u * b2, np.abs(g) + self.hyper["eps"], out=u)
        w -= lr / (1 - b1 ** self.step_count) * m / u


class RMSprop(Optimizer):
    kind = "RMSprop"
    defaults = {"alpha": 0.99, "eps": 1e-8, "weight_decay": 0.0, "momentum": 0.0, "centered": False}

    def check(self):
        super().check()
        _check_beta(self.kind, "alpha", self.hyper["alpha"])
        _check_beta(self.kind, "momentum", self.hyper["momentum"])

    def init_slots(self, w):
        return {"square_avg": np.zeros_like(w), "grad_avg": np.zeros_like(w),
                "momentum_buffer": np.zeros_like(w)}

    def update(self, w, g, slot, lr):
        a, eps = self.hyper["alpha"], self.hyper["eps"]
        g = self._decayed(w, g)
        v = slot["square_avg"]
        v *= a
        v += (1 - a) * g * g
        if self.hyper["centered"]:
            ga = slot["grad_avg"]
            ga *= a
            ga += (1 - a) * g
            denom = np.sqrt(v - ga * ga) + eps
        else:
            denom = np.sqrt(v) + eps
        if self.hyper["momentum"]:
            buf = slot["momentum_buffer"]
            buf *= self.hyper["momentum"]
            buf += g / denom
            w -= lr * buf
        else:
            w -= lr * g / denom


OPTIMIZERS = {cls.kind: cls for cls in (SGD, ASGD, Adadelta, Adagrad, Adam, Adamax, AdamW, RMSprop)}


def make_optimizer(kind, **hyper):
    """Build an optimizer by name (case-insensitive) with the usual framework defaults."""
    lookup = {k.lower(): cls for k, cls in OPTIMIZERS.items()}
    try:
        cls = lookup[str(kind).lower()]
    except KeyError:
        raise ConfigError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}") from None
    return cls(**hyper)


def step(state, params, grads, lr):
    return state.step(params, grads, lr)


class LrSchedule:
    """Piecewise-constant learning rate by epoch.

    ``rows`` are ``(first_epoch, last_epoch, lr)`` with ``last_epoch`` None for
    an open end. Lookup returns the first row containing the epoch, so
    overlapping rows resolve to the earlier one.
    """

    def __init__(self, rows=None, constant=None):
        if (rows is None) == (constant is None):
            raise ConfigError("give either schedule rows or a constant learning rate")
        if constant is not None:
            if not constant > 0:
                raise ConfigError(f"learning rate must be > 0, got {constant}")
            self.rows = [(1, None, float(constant))]
            self.constant = float(constant)
            return
        self.constant = None
        self.rows = [(int(lo), None if hi is None else int(hi), float(lr)) for lo, hi, lr in rows]
        starts = [lo for lo, _, _ in self.rows]
        if starts[0] != 1 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError(f"schedule starts must begin at 1 and strictly increase, got {starts}")
        if any(lr <= 0 for _, _, lr in self.rows):
            raise ConfigError("schedule learning rates must be > 0")
        if self.rows[-1][1] is not None:
            raise ConfigError("the last schedule row must be open-ended")

    @classmethod
    def step_decay(cls):
        return cls(rows=[
            (1, 54, 1e-3),
            (55, 70, 1e-4),
            (71, 80, 1e-5),
            (81, 85, 1e-6),
            (85, 90, 1e-7),
            (91, None, 1e-8),
        ])

    @classmethod
    def from_config(cls, doc):
        if isinstance(doc, str):
            if doc == "step_decay":
                return cls.step_decay()
            raise ConfigError(f"unknown schedule preset {doc!r}")
        if isinstance(doc, (int, float)):
            return cls(constant=doc)
        if not isinstance(doc, dict):
            raise ConfigError(f"malformed schedule {doc!r}")
        extra = set(doc) - {"constant", "rows"}
        if extra:
            raise ConfigError(f"unknown schedule keys: {sorted(extra)}")
        if "constant" in doc:
            return cls(constant=doc["constant"])
        return cls(rows=[tuple(r) for r in doc.get("rows", [])] or None)

    def to_config(self):
        if self.constant is not None:
            return {"constant": self.constant}
        return {"rows": [list(r) for r in self.rows]}

    def __call__(self, epoch):
        return lr_at_epoch(self, epoch)

    def change_epochs(self, max_epoch):
        """Epochs (<= max_epoch) at which the rate differs from the previous epoch."""
        return [e for e in range(2, max_epoch + 1) if self(e) != self(e - 1)]


def lr_at_epoch(schedule, epoch):
    if epoch < 1:
        raise ValueError(f"epochs are 1-based, got {epoch}")
    for lo, hi, lr in schedule.rows:
        if epoch >= lo and (hi is None or epoch <= hi):
            return lr
    # gaps fall back to the last row that started before this epoch
    return [lr for lo, _, lr in schedule.rows if lo <= epoch][-1]
