"""Scripted offline worlds.

Each world is a set of problems plus mock model replies and checker rules
that drive the pipeline down a known path. They back the test suite, the
demo scripts and ``formsynth run`` with the mock backend.

Replies are keyed by phase, purpose and a substring unique to the problem
(its tag, which appears in every prompt about it), so several worlds can
share one script.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .core import CallKind, Phase, Problem, Source
from .gateway import Gateway, MockRule, MockScript, ScriptedBackend
from .leancheck import CheckRule, MockChecker
from .pipeline import Budgets, Workflow
from .retrieval import MockIndex

P = Phase

# identifiers starting with `bogus` do not exist; `simp only [pow_one] at h` followed by
# `exact h` reproduces the rpow/pow confusion from the correction fixtures
CHECK_RULES = (
    CheckRule(r"\bbogus\w*", "unknown identifier"),
    CheckRule(r"simp only \[pow_one\] at h\n\s*(?P<err>exact h)", "type mismatch"),
)

GENERAL_MODEL = "mock-general"
FORMALIZER_MODEL = "mock-formalizer"
PROVER_MODEL = "mock-prover"


def lean(source: str) -> str:
    return f"```lean4\n{source}\n```"


@dataclass
class World:
    problems: list[Problem] = field(default_factory=list)
    rules: list[MockRule] = field(default_factory=list)

    def reply(self, phase: Phase, purpose: str, substring: Optional[str], response: str = "", *,
              times: Optional[int] = 1, error: Optional[str] = None) -> "World":
        self.rules.append(MockRule(phase, response, substring, purpose, times=times, error=error))
        return self

    def __add__(self, other: "World") -> "World":
        return World(self.problems + other.problems, self.rules + other.rules)

    def script(self) -> MockScript:
        return MockScript(self.rules)

    def rule_dicts(self) -> list[dict]:
        out = []
        for r in self.rules:
            d = {"phase": r.phase.value if r.phase else None, "purpose": r.purpose, "substring": r.substring,
                 "response": r.response, "times": r.times}
            if r.error:
                d["error"] = r.error
            out.append(d)
        return out

    def gateway(self) -> Gateway:
        return gateway_for(self.script())

    def workflow(self, budgets: Optional[Budgets] = None, checker_rules: Iterable[CheckRule] = CHECK_RULES) -> Workflow:
        return Workflow(self.gateway(), MockChecker(checker_rules), MockIndex.bundled(), budgets or Budgets())


def gateway_for(script: MockScript) -> Gateway:
    return Gateway({
        CallKind.GENERAL: ScriptedBackend(GENERAL_MODEL, script),
        CallKind.EXPERT_FORMALIZER: ScriptedBackend(FORMALIZER_MODEL, script),
        CallKind.EXPERT_PROVER: ScriptedBackend(PROVER_MODEL, script),
    })


def _statement_front(w: World, tag: str, normalized: str, def_queries: str, def_pick: str,
                     samples: Sequence[str], verdicts: Sequence[str], pick: Optional[str] = None) -> None:
    w.reply(P.NORMALIZATION, "normalize", tag, f"Rewriting.\n<normalized>{normalized}</normalized>")
    w.reply(P.DEFINITION_RETRIEVAL, "queries", tag, def_queries)
    if def_pick is not None:
        w.reply(P.DEFINITION_RETRIEVAL, "premise_selection", tag, def_pick)
    for s in samples:
        w.reply(P.STATEMENT_SAMPLING, "formalize", tag, lean(s))
    for v in verdicts:
        w.reply(P.SEMANTIC_CHECK, "semantic_check", tag, v)
    if pick is not None:
        w.reply(P.SELECTION, "selection", tag, pick)


# -- alpha: the expert prover closes the goal directly ------------------------

ALPHA_STATEMENT = "theorem alpha_add_comm (a b : ℕ) : a + b = b + a := by\n  sorry"
ALPHA_PROOF = "theorem alpha_add_comm (a b : ℕ) : a + b = b + a := by\n  exact Nat.add_comm a b"


def alpha(transport_failure: bool = False) -> World:
    """Two distinct statements compile, the first is chosen, prover sample 1 verifies."""
    tag = "alpha"
    w = World([Problem("alpha", "Show that a + b = b + a for all natural numbers a and b. (alpha)",
                       Source.DEEPMATH, None, ("Algebra -> Prealgebra -> Integers",), 2.0)])
    _statement_front(
        w, tag,
        normalized="For all natural numbers a and b, a + b = b + a. (alpha)",
        def_queries="1. commutativity of addition\n2. natural number addition\n3. commutativity of addition",
        def_pick="1. Nat.add_comm",
        samples=[
            ALPHA_STATEMENT,
            "theorem alpha_add_comm (a b : ℕ) : a + b = b + a := by\n  bogus_intro",
            "theorem alpha_add_comm (a b : ℕ) :  a + b = b + a := by\n  sorry",
            "theorem alpha_add_comm' (a b : Nat) : a + b = b + a := by\n  sorry",
        ],
        verdicts=["<analysis>Matches.</analysis>\n<verdict>ALIGNED</verdict>"] * 2,
        pick="<analysis>The first uses ℕ notation.</analysis>\n<selected>1</selected>",
    )
    w.reply(P.EXPERT_PROVING, "prove", tag, lean(ALPHA_PROOF))
    if transport_failure:
        w.reply(P.EXPERT_PROVING, "prove", tag, lean(ALPHA_PROOF))
        w.reply(P.EXPERT_PROVING, "prove", tag, error="transport")
        w.reply(P.EXPERT_PROVING, "prove", tag, lean(ALPHA_PROOF))
    else:
        w.reply(P.EXPERT_PROVING, "prove", tag, lean(ALPHA_PROOF), times=3)
    return w


# -- beta: expert and refinement fail, the sketch path closes the proof -------

BETA_GOAL = "∑ i ∈ Finset.range n, (2 * i + 1) = n ^ 2"
BETA_STATEMENT = f"theorem beta_odd_sum (n : ℕ) : {BETA_GOAL} := by\n  sorry"
BETA_SKETCH = f"""theorem beta_odd_sum (n : ℕ) : {BETA_GOAL} := by
  have beta_h0 : ∑ i ∈ Finset.range 0, (2 * i + 1) = 0 ^ 2 := by sorry
  have beta_h1 : ∀ m, ∑ i ∈ Finset.range m, (2 * i + 1) = m ^ 2 →
      ∑ i ∈ Finset.range (m + 1), (2 * i + 1) = (m + 1) ^ 2 := by sorry
  induction n with
  | zero => exact beta_h0
  | succ m ih => exact beta_h1 m ih"""
BETA_LEMMA0 = "theorem beta_h0_base : ∑ i ∈ Finset.range 0, (2 * i + 1) = 0 ^ 2 := by\n  sorry"
BETA_LEMMA1 = ("theorem beta_h1_step (m : ℕ) (ih : ∑ i ∈ Finset.range m, (2 * i + 1) = m ^ 2) :\n"
               "    ∑ i ∈ Finset.range (m + 1), (2 * i + 1) = (m + 1) ^ 2 := by\n  sorry")
BETA_PROOF0 = BETA_LEMMA0.replace("sorry", "simp")
BETA_PROOF1 = BETA_LEMMA1.replace("sorry", "rw [Finset.sum_range_succ, ih]\n  ring")
BETA_ASSEMBLED = f"""{BETA_PROOF0}

{BETA_PROOF1}

theorem beta_odd_sum (n : ℕ) : {BETA_GOAL} := by
  induction n with
  | zero => exact beta_h0_base
  | succ m ih => exact beta_h1_step m ih"""


def beta() -> World:
    tag = "beta"
    w = World([Problem("beta", "Prove that the sum of the first n odd numbers is n^2. (beta)",
                       Source.DEEPTHEOREM, None, ("Discrete Mathematics -> Combinatorics",), 7.0)])
    bad = f"theorem beta_odd_sum (n : ℕ) : {BETA_GOAL} := by\n  bogus_induction n"
    _statement_front(
        w, tag,
        normalized="For every natural number n, the sum of the first n odd numbers equals n^2. (beta)",
        def_queries="1. finite sum over a range",
        def_pick="none",
        samples=[BETA_STATEMENT, bad, bad, bad],
        verdicts=["<verdict>ALIGNED</verdict>"],
    )
    w.reply(P.EXPERT_PROVING, "prove", tag, lean(bad), times=4)
    w.reply(P.REFINEMENT, "refine", tag, lean(bad.replace("bogus_induction n", "simp [bogus_sum]")))
    w.reply(P.THEOREM_RETRIEVAL, "queries", tag, "1. sum over range successor\n2. square of successor")
    w.reply(P.THEOREM_RETRIEVAL, "premise_selection", tag, "1. Finset.sum_range_succ\n2. add_pow_two")
    w.reply(P.INFORMAL_PROOF, "informal_proof", tag, "Induct on n. The base case is empty; the step adds 2n+1.")
    w.reply(P.SKETCHING, "sketch", tag, lean(BETA_SKETCH))
    w.reply(P.SKETCHING, "subgoal_extraction", tag, lean(BETA_LEMMA0) + "\n\n" + lean(BETA_LEMMA1))
    # subgoal 0: expert closes it
    w.reply(P.SUBGOAL_SOLVING, "prove", "beta_h0_base", lean(BETA_PROOF0), times=4)
    # subgoal 1: expert and its refinement fail, the guided attempt is fixed on the first round
    bad1 = BETA_LEMMA1.replace("sorry", "bogus_ring")
    w.reply(P.SUBGOAL_SOLVING, "prove", "beta_h1_step", lean(bad1), times=4)
    w.reply(P.SUBGOAL_SOLVING, "refine", "beta_h1_step", lean(BETA_LEMMA1.replace("sorry", "rw [bogus_sum]")))
    w.reply(P.SUBGOAL_SOLVING, "informal_proof", "beta_h1_step", "Split off the last term and use ih.")
    w.reply(P.SUBGOAL_SOLVING, "subgoal_proof", "beta_h1_step",
            lean(BETA_LEMMA1.replace("sorry", "rw [Finset.sum_range_succ, ih]\n  bogus_ring")))
    w.reply(P.SUBGOAL_SOLVING, "refine", "beta_h1_step", lean(BETA_PROOF1))
    w.reply(P.ASSEMBLY, "assembly", tag, lean(BETA_ASSEMBLED))
    return w


# -- gamma: corrected statement, but no compiling sketch -----------------------

GAMMA_WRONG = "theorem gamma_irrational : Irrational (2 : ℝ) := by\n  sorry"
GAMMA_STATEMENT = "theorem gamma_irrational : Irrational (√2 : ℝ) := by\n  sorry"


def gamma() -> World:
    tag = "gamma"
    w = World([Problem("gamma", "Show that the square root of 2 is irrational. (gamma)",
                       Source.DEEPTHEOREM, None, ("Number Theory -> Irrationality",), 9.0)])
    _statement_front(
        w, tag,
        normalized="The real number √2 is irrational. (gamma)",
        def_queries="1. irrational real number\n2. square root",
        def_pick="1. Irrational\n2. Real.sqrt",
        samples=[GAMMA_WRONG] * 4,
        verdicts=["<analysis>The square root is missing.</analysis>\n<verdict>NOT_ALIGNED</verdict>\n"
                  f"<fixed_formal_statement>\n{lean(GAMMA_STATEMENT)}\n</fixed_formal_statement>"],
    )
    w.reply(P.EXPERT_PROVING, "prove", tag, lean(GAMMA_STATEMENT.replace("sorry", "bogus_norm_num")), times=2)
    w.reply(P.EXPERT_PROVING, "prove", tag, lean(GAMMA_STATEMENT.replace("sorry", "exact bogus_irrational")), times=2)
    w.reply(P.REFINEMENT, "refine", tag, lean(GAMMA_STATEMENT.replace("sorry", "exact bogus_sqrt_two")), times=2)
    w.reply(P.THEOREM_RETRIEVAL, "queries", tag, "I am not sure what to search for.")
    w.reply(P.INFORMAL_PROOF, "informal_proof", tag, "Suppose √2 = p/q in lowest terms; then p and q are both even.")
    broken = GAMMA_STATEMENT.replace("sorry", "have gamma_h : bogus_claim := by sorry\n  exact gamma_h")
    w.reply(P.SKETCHING, "sketch", tag, lean(broken))
    w.reply(P.SKETCHING, "sketch_fix", tag, lean(broken.replace("gamma_h :", "gamma_h2 :")))
    return w


# -- delta: four subgoals, two solved, the third fails, the fourth is cancelled

DELTA_STATEMENT = "theorem delta_geom (n : ℕ) : ∑ i ∈ Finset.range n, (2 : ℚ) ^ i = 2 ^ n - 1 := by\n  sorry"


def delta_lemma(i: int) -> str:
    return f"theorem delta_h{i}_part (n : ℕ) : (2 : ℚ) ^ n + {i} = {i} + 2 ^ n := by\n  sorry"


def delta() -> World:
    tag = "delta"
    w = World([Problem("delta", "Find the sum 1 + 2 + 4 + ... + 2^(n-1). (delta)", Source.DEEPMATH, "2^n - 1",
                       ("Algebra -> Sequences and Series",), 5.0)])
    _statement_front(
        w, tag,
        normalized="For every natural number n, the sum of 2^i for i < n equals 2^n - 1. (delta)",
        def_queries="1. geometric sum\n2. finite sum over a range",
        def_pick="1. Finset.range",
        samples=[DELTA_STATEMENT] * 4,
        verdicts=["<verdict>ALIGNED</verdict>"],
    )
    bad = DELTA_STATEMENT.replace("sorry", "bogus_geom")
    w.reply(P.EXPERT_PROVING, "prove", tag, lean(bad), times=4)
    w.reply(P.REFINEMENT, "refine", tag, lean(DELTA_STATEMENT.replace("sorry", "simp [bogus_geom_sum]")))
    w.reply(P.THEOREM_RETRIEVAL, "queries", tag, "1. sum of geometric series\n2. sum over range successor")
    w.reply(P.THEOREM_RETRIEVAL, "premise_selection", tag, "1. geom_sum_eq\n2. Finset.sum_range_succ")
    w.reply(P.INFORMAL_PROOF, "informal_proof", tag, "Induct on n and split off the last term.")
    haves = "".join(f"  have delta_h{i} : ∀ n : ℕ, (2 : ℚ) ^ n + {i} = {i} + 2 ^ n := by sorry\n" for i in range(4))
    sketch = DELTA_STATEMENT.replace("  sorry", haves + "  simp_all")
    w.reply(P.SKETCHING, "sketch", tag, lean(sketch))
    w.reply(P.SKETCHING, "subgoal_extraction", tag, "\n\n".join(lean(delta_lemma(i)) for i in range(4)))
    # h0: expert
    w.reply(P.SUBGOAL_SOLVING, "prove", "delta_h0_", lean(delta_lemma(0).replace("sorry", "ring")), times=4)
    # h1: expert fails, refinement succeeds
    w.reply(P.SUBGOAL_SOLVING, "prove", "delta_h1_", lean(delta_lemma(1).replace("sorry", "bogus_comm")), times=4)
    w.reply(P.SUBGOAL_SOLVING, "refine", "delta_h1_", lean(delta_lemma(1).replace("sorry", "ring")))
    # h2: everything fails
    _failing_subgoal(w, "delta_h2_", delta_lemma(2))
    return w


def _failing_subgoal(w: World, key: str, lemma: str, k_prover: int = 4, k_refine: int = 2) -> None:
    w.reply(P.SUBGOAL_SOLVING, "prove", key, lean(lemma.replace("sorry", "bogus_a")), times=k_prover)
    w.reply(P.SUBGOAL_SOLVING, "refine", key, lean(lemma.replace("sorry", "bogus_b")))
    w.reply(P.SUBGOAL_SOLVING, "informal_proof", key, "Both sides are equal by commutativity.")
    w.reply(P.SUBGOAL_SOLVING, "subgoal_proof", key, lean(lemma.replace("sorry", "bogus_c")))
    w.reply(P.SUBGOAL_SOLVING, "refine", key, lean(lemma.replace("sorry", "bogus_d")), times=k_refine)


# -- epsilon: baseline mode ---------------------------------------------------

EPSILON_STATEMENT = "theorem epsilon_two_mul (x : ℝ) : 2 * x = x + x := by\n  sorry"


def epsilon() -> World:
    """Baseline world: formalizer sample 2 compiles, prover sample 2 verifies."""
    tag = "epsilon"
    w = World([Problem("epsilon", "Show that 2x = x + x for every real x. (epsilon)", Source.OTHER)])
    w.reply(P.STATEMENT_SAMPLING, "formalize", tag, lean(EPSILON_STATEMENT.replace("sorry", "bogus")))
    w.reply(P.STATEMENT_SAMPLING, "formalize", tag, lean(EPSILON_STATEMENT), times=3)
    w.reply(P.EXPERT_PROVING, "prove", tag, lean(EPSILON_STATEMENT.replace("sorry", "bogus_ring")))
    w.reply(P.EXPERT_PROVING, "prove", tag, lean(EPSILON_STATEMENT.replace("sorry", "exact two_mul x")), times=3)
    return w


# -- early stop ---------------------------------------------------------------


def early_stop_lemma(i: int) -> str:
    return f"theorem es_h{i}_lemma (x : ℕ) : x + {i} = {i} + x := by\n  sorry"


def early_stop(n: int, fail_at: Optional[int], budgets: Budgets = Budgets()) -> World:
    """Replies for `n` standalone subgoals where subgoal `fail_at` (if any) cannot be proved.

    Subgoals after `fail_at` get replies too, so a schedule that does reach
    them would not run dry.
    """
    w = World()
    for i in range(n):
        key = f"es_h{i}_"
        lemma = early_stop_lemma(i)
        if i == fail_at:
            _failing_subgoal(w, key, lemma, budgets.k_prover, budgets.k_refine)
        else:
            w.reply(P.SUBGOAL_SOLVING, "prove", key, lean(lemma.replace("sorry", "omega")), times=budgets.k_prover)
    return w


def golden() -> World:
    """The three-problem reference run: expert success, sketch success, sketch failure."""
    return alpha() + beta() + gamma()


def everything() -> World:
    return alpha() + beta() + gamma() + delta()


WORLDS = {"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta, "epsilon": epsilon,
          "golden": golden, "all": everything}
