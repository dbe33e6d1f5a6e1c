"""Built-in models: generator descriptions and their known kinetic equations.

``PRESETS`` holds the rate descriptions with desk-scale parameter values.
``CATALOG`` holds the limiting equations written out by hand in canonical
form; ``derive`` checks the compiler against it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dsl import GeneratorSpec, parse


@dataclass(frozen=True)
class Preset:
    name: str
    title: str
    text: str


def _box(text: str, d: int = 1, L: float = 10.0) -> str:
    return f"box({d}, {L:g});\n" + text.strip() + "\n"


PRESETS = {p.name: p for p in [
    Preset("surgailis", "Surgailis (independent births and deaths)", _box("""
const m = 1;
const sigma = 2 scale inveps;
death = m;
birth = sigma
""")),
    Preset("contact", "Contact model", _box("""
kernel a gaussian(1) scale eps;
const m = 1;
const lambda = 0.5 scale inveps;
death = m;
birth = lambda * sum[y in gamma] a(x-y)
""")),
    Preset("social", "Social model", _box("""
kernel a gaussian(1) scale eps;
const sigma = 2 scale inveps;
death = sum[y in gamma\\x] a(x-y);
birth = sigma
""")),
    Preset("bdlp", "Competition model with dispersal (BDLP)", _box("""
kernel aplus gaussian(1) scale eps;
kernel aminus gaussian(0.5) scale eps;
const m = 1;
const lambda = 2 scale inveps;
death = m + sum[y in gamma\\x] aminus(x-y);
birth = lambda * sum[y in gamma] aplus(x-y)
""")),
    Preset("establishment", "Contact model with establishment", _box("""
kernel a gaussian(1) scale eps;
kernel phi gaussian(0.5) scale eps;
const m = 1;
const lambda = 2 scale inveps;
death = m;
birth = lambda * sum[y in gamma] a(x-y) * exp(-sum[u in gamma] phi(x-u))
""")),
    Preset("fecundity", "Contact model with fecundity", _box("""
kernel a gaussian(1) scale eps;
kernel phi gaussian(0.5) scale eps;
const m = 1;
const lambda = 2 scale inveps;
death = m;
birth = lambda * sum[y in gamma] (a(x-y) * exp(-sum[u in gamma\\y] phi(y-u)))
""")),
    Preset("dieckmann_law", "Dieckmann-Law model", _box("""
kernel aplus gaussian(1) scale eps;
kernel aminus gaussian(0.5) amplitude 2 scale eps;
kernel b gaussian(0.5) amplitude 0.5 scale eps;
const m = 1;
const lambda = 1;
death = m + sum[y in gamma\\x] aminus(x-y);
birth = inveps * sum[y in gamma] (aplus(x-y) * (lambda + sum[u in gamma\\y] b(y-u)))
""")),
    Preset("glauber_plus", "Glauber G+ dynamics", _box("""
kernel phi gaussian(0.5) scale eps;
const z = 1 scale inveps;
death = 1;
birth = z * exp(-sum[u in gamma] phi(x-u))
""")),
    Preset("glauber_minus", "Glauber G- dynamics", _box("""
kernel phi gaussian(0.5) scale eps;
const z = 1 scale inveps;
death = exp(sum[u in gamma] phi(x-u));
birth = z
""")),
    Preset("free_kawasaki", "Free Kawasaki hopping", _box("""
kernel a gaussian(1);
hop = a(x-y)
""")),
    Preset("kawasaki_departure", "Density-dependent Kawasaki, rate set at the departure point", _box("""
kernel a gaussian(1);
kernel b gaussian(0.5) scale eps;
hop = a(x-y) * sum[u in gamma] b(x-u)
""")),
    Preset("kawasaki_arrival", "Density-dependent Kawasaki, rate set at the arrival point", _box("""
kernel a gaussian(1);
kernel b gaussian(0.5) scale eps;
hop = a(x-y) * sum[u in gamma] b(y-u)
""")),
    Preset("gibbs_kawasaki", "Gibbs-Kawasaki hopping", _box("""
kernel a gaussian(1);
kernel phi gaussian(0.5) scale eps;
hop = a(x-y) * exp(-sum[u in gamma] phi(y-u))
""")),
]}

# Kinetic equations of the models above, transcribed by hand.
CATALOG = {
    "surgailis": "-m*rho + sigma",
    "contact": "-m*rho + lambda*conv(a,rho)",
    "social": "-rho*conv(a,rho) + sigma",
    "bdlp": "-m*rho - rho*conv(aminus,rho) + lambda*conv(aplus,rho)",
    "establishment": "-m*rho + lambda*conv(a,rho)*exp(-conv(phi,rho))",
    "fecundity": "-m*rho + lambda*conv(a,rho*exp(-conv(phi,rho)))",
    "dieckmann_law": "-m*rho - rho*conv(aminus,rho) + lambda*conv(aplus,rho) + conv(aplus,rho*conv(b,rho))",
    "glauber_plus": "-rho + z*exp(-conv(phi,rho))",
    "glauber_minus": "-rho*exp(conv(phi,rho)) + z",
    "free_kawasaki": "conv(a,rho) - mass(a)*rho",
    "kawasaki_departure": "conv(a,rho*conv(b,rho)) - mass(a)*rho*conv(b,rho)",
    "kawasaki_arrival": "conv(a,rho)*conv(b,rho) - rho*conv(a,conv(b,rho))",
    "gibbs_kawasaki": "conv(a,rho)*exp(-conv(phi,rho)) - rho*conv(a,exp(-conv(phi,rho)))",
}


def preset_name(name: str) -> str:
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    aliases = {"glauber": "glauber_plus", "glauber_g+": "glauber_plus", "glauber_g_": "glauber_minus",
               "kawasaki": "free_kawasaki", "dl": "dieckmann_law"}
    key = aliases.get(key, key)
    if key not in PRESETS:
        raise KeyError(f"unknown model {name!r}; presets: {', '.join(sorted(PRESETS))}")
    return key


def load_preset(name: str) -> GeneratorSpec:
    return parse(PRESETS[preset_name(name)].text)
