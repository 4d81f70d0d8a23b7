"""Evolutionary sample-level prompt refinement.

A user's delete/add selection over generated images defines an objective;
an LLM-backed mutation provider proposes prompt edits; each candidate is
scored on a fresh batch of proxy generations; strictly better candidates
replace the incumbent (hill climbing) until the relative gain falls below a
threshold or the iteration budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .errors import EmptySet, ProviderError, SingleClass, TooFewProxies, UnknownImageIds
from .metrics import diversity, softmax
from .prompts import PromptTemplate

DELETE = "delete"
ADD = "add"


@dataclass(frozen=True)
class FeedbackAction:
    kind: str  # "delete" | "add"
    image_ids: frozenset
    class_name: str

    def __post_init__(self):
        if self.kind not in (DELETE, ADD):
            raise ValueError(f"kind must be '{DELETE}' or '{ADD}', got '{self.kind}'")
        if not self.image_ids:
            raise ValueError("image_ids must be nonempty")

    def validate_against(self, corpus: Corpus) -> None:
        unknown = {i for i in self.image_ids if i not in {im.id for im in corpus.images}}
        if unknown:
            raise UnknownImageIds(unknown)
        wrong = [i for i in self.image_ids if corpus.image(i).class_name != self.class_name]
        if wrong:
            raise ValueError(f"image '{wrong[0]}' is not in class '{self.class_name}'")


@dataclass(frozen=True)
class ObjectiveScore:
    value: float
    sizes: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


def _cos_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    bn = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-12)
    return an @ bn.T


def confidence(embedding, class_label_embeddings, tau_c: float = 1.0) -> float:
    """Zero-shot confidence: peak of the softmax over class-similarity logits."""
    classes = np.atleast_2d(np.asarray(class_label_embeddings, dtype=float))
    if classes.shape[0] < 2:
        raise SingleClass("confidence needs at least 2 classes")
    sims = _cos_rows(np.atleast_2d(np.asarray(embedding, dtype=float)), classes)[0]
    return float(softmax(sims / tau_c).max())


def delete_objective(proxies, deleted, remaining, class_label_embeddings,
                     tau_c: float = 1.0) -> ObjectiveScore:
    """Reward proxies that sit away from the deleted images, near the
    remaining images of the class, and classify confidently. Sums are left
    unnormalized; the set sizes ride along for reporting."""
    proxies = np.atleast_2d(np.asarray(proxies, dtype=float))
    deleted = np.atleast_2d(np.asarray(deleted, dtype=float))
    remaining = np.atleast_2d(np.asarray(remaining, dtype=float))
    for name, arr in (("proxies", proxies), ("deleted", deleted), ("remaining", remaining)):
        if arr.size == 0:
            raise EmptySet(f"{name} set is empty")
    value = (-float(_cos_rows(proxies, deleted).sum())
             + float(_cos_rows(proxies, remaining).sum())
             + sum(confidence(p, class_label_embeddings, tau_c) for p in proxies))
    return ObjectiveScore(value=value, sizes={"proxies": len(proxies),
                                              "deleted": len(deleted),
                                              "remaining": len(remaining)})


def add_objective(proxies, selected, class_label_embeddings,
                  tau_c: float = 1.0) -> ObjectiveScore:
    """Reward diverse proxies that stay near the selected images and
    classify confidently."""
    proxies = np.atleast_2d(np.asarray(proxies, dtype=float))
    selected = np.atleast_2d(np.asarray(selected, dtype=float))
    if len(proxies) < 2:
        raise TooFewProxies("diversity needs at least 2 proxies")
    if selected.size == 0:
        raise EmptySet("selected set is empty")
    spread = diversity(proxies, ["_proxy"] * len(proxies))
    value = (spread
             + float(_cos_rows(proxies, selected).sum())
             + sum(confidence(p, class_label_embeddings, tau_c) for p in proxies))
    return ObjectiveScore(value=value, sizes={"proxies": len(proxies),
                                              "selected": len(selected)})


@dataclass(frozen=True)
class EvolutionStep:
    candidate: PromptTemplate
    objective: float
    accepted: bool


@dataclass(frozen=True)
class EvolutionTrace:
    initial_objective: float
    steps: tuple[EvolutionStep, ...]
    termination: str  # "converged" | "max_iter" | "provider_error"
    error: str | None = None

    def accepted_values(self) -> list[float]:
        return [self.initial_objective] + [s.objective for s in self.steps if s.accepted]

    def as_dict(self) -> dict:
        return {
            "initial_objective": self.initial_objective,
            "termination": self.termination,
            "error": self.error,
            "steps": [{"text": s.candidate.text, "version": s.candidate.version,
                       "objective": s.objective, "accepted": s.accepted}
                      for s in self.steps],
        }


@dataclass(frozen=True)
class EvolveConfig:
    n_proxies: int = 8
    epsilon: float = 1e-3
    max_iter: int = 10
    seed: int = 0
    tau_c: float = 1.0


def evolve(prompt: PromptTemplate, feedback: FeedbackAction, corpus: Corpus,
           providers, config: EvolveConfig = EvolveConfig()):
    """Hill-climb the prompt against the feedback objective.

    Returns (best prompt, trace). The input prompt is never modified; every
    accepted candidate extends the version chain by one.
    """
    feedback.validate_against(corpus)
    class_embs = providers.embedder.embed(list(corpus.classes))

    class_images = [im for im in corpus.images if im.class_name == feedback.class_name]
    selected_emb = np.array([corpus.image(i).embedding for i in sorted(feedback.image_ids)])
    if feedback.kind == DELETE:
        remaining = [im for im in class_images if im.id not in feedback.image_ids]
        if not remaining:
            raise EmptySet(f"deleting all images of class '{feedback.class_name}'")
        remaining_emb = np.array([im.embedding for im in remaining])

        def score(proxies):
            return delete_objective(proxies, selected_emb, remaining_emb,
                                    class_embs, config.tau_c).value
    else:
        def score(proxies):
            return add_objective(proxies, selected_emb, class_embs, config.tau_c).value

    # one generation seed for the whole run: a candidate's score is a pure
    # function of its text, so an identity mutation re-scores identically and
    # can never improve strictly
    current = prompt
    current_value = score(providers.generator.generate_proxies(
        current, config.n_proxies, seed=config.seed))
    initial_value = current_value

    steps: list[EvolutionStep] = []
    termination = "max_iter"
    error = None
    for it in range(1, config.max_iter + 1):
        try:
            candidate = providers.mutator.mutate(current, seed=config.seed + it)
            proxies = providers.generator.generate_proxies(
                candidate, config.n_proxies, seed=config.seed)
        except ProviderError as exc:
            termination, error = "provider_error", str(exc)
            break
        value = score(proxies)
        accepted = value > current_value
        if accepted:
            candidate = PromptTemplate(id=current.id, class_name=current.class_name,
                                       text=candidate.text, version=current.version + 1,
                                       parent_version=current.version)
            gain = (value - current_value) / max(abs(current_value), 1e-12)
            steps.append(EvolutionStep(candidate=candidate, objective=value, accepted=True))
            current, current_value = candidate, value
            if gain < config.epsilon:
                termination = "converged"
                break
        else:
            steps.append(EvolutionStep(candidate=candidate, objective=value, accepted=False))

    trace = EvolutionTrace(initial_objective=initial_value, steps=tuple(steps),
                           termination=termination, error=error)
    return current, trace
