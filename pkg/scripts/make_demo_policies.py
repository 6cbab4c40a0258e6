#!/usr/bin/env python3
"""Generate a demo policy directory: a handful of retailers exhibiting
multiplicative, additive, mixed, persona-keyed and A/B pricing."""
import argparse
import random
from decimal import Decimal
from pathlib import Path

from pricescope import sim

REGIONS = {
    "us-east": ("USD", "en-US"),
    "uk": ("GBP", "en-GB"),
    "de": ("EUR", "de"),
    "fi": ("EUR", "fi-FI"),
    "br": ("BRL", "pt-BR"),
}

FX = {"USD/GBP": Decimal("0.64"), "USD/EUR": Decimal("0.77"),
      "USD/BRL": Decimal("1.98")}

NOUNS = ["Lamp", "Chair", "Shelf", "Kettle", "Monitor", "Router", "Backpack",
         "Blender", "Keyboard", "Headphones", "Tripod", "Notebook"]


def catalog(rng, n, lo=15, hi=400):
    return [sim.CatalogItem(f"p{i:03d}",
                            f"{rng.choice(NOUNS)} {i:03d}",
                            Decimal(str(round(rng.uniform(lo, hi), 2))))
            for i in range(n)]


def rules(multipliers, surcharges=None):
    surcharges = surcharges or {}
    return {region: sim.RegionRule(
        Decimal(str(multipliers.get(region, 1))),
        Decimal(str(surcharges.get(region, 0))),
        *REGIONS[region][:1], REGIONS[region][1])
        for region in REGIONS}


def build(rng):
    policies = []
    policies.append(sim.PricingPolicy(
        domain="flatmart.test", catalog=catalog(rng, 24),
        region_rules=rules({}), fx_rates=FX, seed=1,
        third_parties=["https://metrics.tracker-a.example/t.js"]))
    policies.append(sim.PricingPolicy(
        domain="photogear.test", catalog=catalog(rng, 24, 80, 2500),
        region_rules=rules({"fi": 1.3, "de": 1.18, "uk": 1.18}),
        fx_rates=FX, seed=2,
        third_parties=["https://metrics.tracker-a.example/t.js",
                       "https://ads.clickgrid.example/px.gif"]))
    policies.append(sim.PricingPolicy(
        domain="clothline.test", catalog=catalog(rng, 24, 10, 150),
        region_rules=rules({"fi": 1.0}, surcharges={"fi": 8}),
        fx_rates=FX, seed=3, template=sim.TEMPLATE_MINIMAL))
    policies.append(sim.PricingPolicy(
        domain="mixbazaar.test", catalog=catalog(rng, 24),
        region_rules=rules({"br": 1.1}, surcharges={"br": 2}),
        fx_rates=FX, seed=4))
    policies.append(sim.PricingPolicy(
        domain="ebookhut.test", catalog=catalog(rng, 24, 5, 40),
        region_rules=rules({}),
        persona_rules=[sim.PersonaRule(cookie="logged_in=1",
                                       multiplier=Decimal("0.9"))],
        fx_rates=FX, seed=5))
    policies.append(sim.PricingPolicy(
        domain="abshop.test", catalog=catalog(rng, 24),
        region_rules=rules({}), ab_probability=0.5,
        ab_amplitude=Decimal("0.08"), fx_rates=FX, seed=6))
    return policies


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="./policies")
    parser.add_argument("--seed", type=int, default=13)
    args = parser.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    for policy in build(rng):
        path = sim.save_policy(policy, out)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
