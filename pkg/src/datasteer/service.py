"""HTTP session service: the engine behind the workbench UI.

A session owns a chain of corpus versions. Reads always derive from one
immutable `SessionState` snapshot grabbed at the start of the request, so a
response never mixes two corpus versions. Writes (feedback acceptance,
prompt edits) are serialized per session and swap in a fresh snapshot
atomically. Prompt evolution runs on a worker thread and parks its
recommendation as a pending prompt for accept/reject.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import metrics as metrics_mod
from .corpus import Corpus, GENERATED, ImageRecord, load_corpus
from .errors import DatasteerError, MalformedRecord, MissingGenerated, UnknownImageIds
from .hierarchy import LabelTree, build_hierarchy, doi, name_nodes, tree_cut
from .layout import Layout
from .projection import ContrastiveProjector
from .prompts import PromptTemplate, validate_template
from .providers import ProviderConfig, Providers, make_providers, provider_config_from_env
from .refine import EvolveConfig, FeedbackAction, evolve


@dataclass(frozen=True)
class ServiceConfig:
    epochs: int = 30
    batch_size: int = 256
    tau: float = 0.1
    k: int = 15
    m_negatives: int = 5
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple = (64, 64, 32, 32, 16)
    images_per_accept: int = 30
    n_proxies: int = 8
    epsilon: float = 1e-3
    max_iter: int = 10
    log_dir: str | None = None  # append-only event log per session, for replay
    provider: ProviderConfig = ProviderConfig(kind="mock", seed=0)

    @staticmethod
    def from_dict(data: dict | None) -> "ServiceConfig":
        data = dict(data or {})
        provider = data.pop("provider", None)
        cfg = ServiceConfig(**data) if data else ServiceConfig()
        if provider is not None:
            cfg = replace(cfg, provider=ProviderConfig(**provider))
        return cfg


@dataclass(frozen=True)
class SessionState:
    """One immutable snapshot of everything a read endpoint may serve."""

    corpus_version: int
    corpus: Corpus
    layout: Layout
    tree: LabelTree
    timeline: tuple  # dicts with nullable metric fields
    prompts: dict    # class -> PromptTemplate
    pending: dict    # prompt_id -> {"prompt", "feedback", "trace", "job_id"}
    events: tuple


@dataclass
class Job:
    id: str
    class_name: str
    status: str = "running"  # running | done | failed
    prompt_id: str | None = None
    error: str | None = None


@dataclass
class Session:
    id: str
    config: ServiceConfig
    providers: Providers
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    jobs: dict = field(default_factory=dict)
    counter: itertools.count = field(default_factory=itertools.count)


def _fit_layout(corpus: Corpus, cfg: ServiceConfig) -> Layout:
    projector = ContrastiveProjector(
        epochs=cfg.epochs, batch_size=cfg.batch_size, tau=cfg.tau, k=cfg.k,
        m_negatives=cfg.m_negatives, lr=cfg.lr, seed=cfg.seed, hidden=cfg.hidden)
    return projector.fit_transform(corpus)


def _snapshot_or_null(corpus: Corpus, iteration: int) -> dict:
    try:
        point = metrics_mod.metric_snapshot(corpus, iteration)
        return {"iteration": point.iteration, "informativeness": point.informativeness,
                "diversity": point.diversity, "distance": point.distance,
                "generated_count": point.generated_count}
    except MissingGenerated:
        return {"iteration": iteration, "informativeness": None, "diversity": None,
                "distance": None, "generated_count": 0}


def _build_tree(corpus: Corpus, providers: Providers) -> LabelTree:
    tree = build_hierarchy(corpus.labels, corpus=corpus)
    freqs = {la.id: la.frequency for la in corpus.labels}
    return name_nodes(tree, providers.namer, frequencies=freqs)


def _default_prompts(corpus: Corpus) -> dict:
    return {cls: PromptTemplate(id=f"prompt-{cls}", class_name=cls,
                                text=f"A [photo | picture] of a {cls}")
            for cls in corpus.classes}


def _initial_state(corpus: Corpus, cfg: ServiceConfig, providers: Providers) -> SessionState:
    layout = _fit_layout(corpus, cfg)
    tree = _build_tree(corpus, providers)
    iteration = max((im.iteration for im in corpus.images if im.kind == GENERATED), default=0)
    timeline = (_snapshot_or_null(corpus, iteration),)
    return SessionState(corpus_version=0, corpus=corpus, layout=layout, tree=tree,
                        timeline=timeline, prompts=_default_prompts(corpus),
                        pending={}, events=(_event("create"),))


def _event(name: str, **details) -> dict:
    return {"event": name, "ts": time.time(), **details}


def _persist_events(session: "Session", events) -> None:
    """Append events to the session's on-disk log when a log_dir is set."""
    if not session.config.log_dir:
        return
    log_dir = Path(session.config.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    with open(log_dir / f"{session.id}.events.jsonl", "a", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event) + "\n")


def _zero_shot_prediction(embedding: np.ndarray, class_embs: np.ndarray,
                          tau_c: float = 0.5) -> tuple[float, ...]:
    sims = class_embs @ embedding / (
        np.linalg.norm(class_embs, axis=1) * max(np.linalg.norm(embedding), 1e-12))
    logits = sims / tau_c
    e = np.exp(logits - logits.max())
    return tuple(float(p) for p in e / e.sum())


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, corpus_path: str, config: dict | None) -> Session:
        cfg = ServiceConfig.from_dict(config)
        corpus = load_corpus(corpus_path)
        # providers operate in the corpus embedding space; env vars may
        # redirect them at an HTTP endpoint
        provider_cfg = provider_config_from_env(replace(cfg.provider, dim=corpus.dimension))
        cfg = replace(cfg, provider=provider_cfg)
        providers = make_providers(cfg.provider)
        state = _initial_state(corpus, cfg, providers)
        session = Session(id=str(uuid.uuid4()), config=cfg, providers=providers, state=state)
        _persist_events(session, state.events)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail={
                "code": "UnknownSession", "message": f"no session '{session_id}'", "detail": {}})


# -- request bodies ----------------------------------------------------------

class CreateSessionBody(BaseModel):
    corpus_path: str
    config: dict | None = None


class FeedbackBody(BaseModel):
    kind: str
    class_name: str
    image_ids: list[str]


class PromptEditBody(BaseModel):
    text: str


def _error_payload(code: str, message: str, detail: dict | None = None) -> dict:
    return {"code": code, "message": message, "detail": detail or {}}


def create_app(store: SessionStore | None = None) -> FastAPI:
    app = FastAPI(title="datasteer service")
    store = store if store is not None else SessionStore()
    app.state.store = store

    @app.exception_handler(DatasteerError)
    async def _domain_error(request: Request, exc: DatasteerError):
        status = 409 if exc.__class__.__name__ == "ConflictingJob" else 422
        return JSONResponse(status_code=status, content=_error_payload(
            exc.__class__.__name__, str(exc)))

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        try:
            session = store.create(body.corpus_path, body.config)
        except MalformedRecord as exc:
            raise HTTPException(status_code=422, detail=_error_payload(
                "MalformedRecord", str(exc), {"stage": "ingest", "line": exc.line,
                                              "field": exc.field}))
        except DatasteerError as exc:
            raise HTTPException(status_code=422, detail=_error_payload(
                exc.__class__.__name__, str(exc), {"stage": "ingest"}))
        except FileNotFoundError as exc:
            raise HTTPException(status_code=422, detail=_error_payload(
                "FileNotFound", str(exc), {"stage": "ingest"}))
        return {"session_id": session.id, "corpus_version": session.state.corpus_version}

    @app.get("/sessions/{sid}/projection")
    def projection(sid: str):
        state = store.get(sid).state
        points = []
        for im in state.corpus.images:
            x, y = state.layout[im.id]
            points.append({"id": im.id, "modality": "image", "x": x, "y": y,
                           "class_name": im.class_name, "kind": im.kind,
                           "iteration": im.iteration})
        for la in state.corpus.labels:
            x, y = state.layout[la.id]
            points.append({"id": la.id, "modality": "label", "x": x, "y": y,
                           "text": la.text})
        return {"corpus_version": state.corpus_version, "points": points}

    @app.get("/sessions/{sid}/treecut")
    def treecut(sid: str, budget: int = 8, focus: str | None = None):
        state = store.get(sid).state
        tree = state.tree
        focus = focus or tree.root_id
        cut = tree_cut(tree, focus, budget)
        nodes = []
        for nid in sorted(cut.node_ids):
            node = tree.node(nid)
            xs, ys = zip(*(state.layout[m] for m in node.members))
            nodes.append({
                "id": node.id, "name": node.name, "members": list(node.members),
                "original_count": node.original_count,
                "generated_count": node.generated_count,
                "doi": doi(tree, nid, focus),
                "x": float(np.mean(xs)), "y": float(np.mean(ys)),
            })
        return {"corpus_version": state.corpus_version, "focus": focus,
                "budget": budget, "nodes": nodes}

    @app.get("/sessions/{sid}/metrics")
    def metrics(sid: str):
        state = store.get(sid).state
        return {"corpus_version": state.corpus_version, "timeline": list(state.timeline)}

    @app.get("/sessions/{sid}/prompts")
    def prompts(sid: str):
        state = store.get(sid).state
        return {
            "corpus_version": state.corpus_version,
            "prompts": [p.as_dict() for _, p in sorted(state.prompts.items())],
            "pending": [{**entry["prompt"].as_dict(), "prompt_id": pid,
                         "job_id": entry["job_id"]}
                        for pid, entry in sorted(state.pending.items())],
        }

    @app.get("/sessions/{sid}/images")
    def images(sid: str, class_name: str | None = None, kind: str | None = None,
               label: str | None = None, iteration: int | None = None):
        state = store.get(sid).state
        out = []
        for im in state.corpus.images:
            if class_name is not None and im.class_name != class_name:
                continue
            if kind is not None and im.kind != kind:
                continue
            if iteration is not None and im.iteration != iteration:
                continue
            if label is not None and label not in state.corpus.labels_of(im.id):
                continue
            x, y = state.layout[im.id]
            out.append({"id": im.id, "class_name": im.class_name, "kind": im.kind,
                        "iteration": im.iteration, "prompt_id": im.prompt_id,
                        "x": x, "y": y})
        return {"corpus_version": state.corpus_version, "images": out}

    @app.get("/sessions/{sid}/images/{image_id}")
    def image_detail(sid: str, image_id: str):
        state = store.get(sid).state
        try:
            im = state.corpus.image(image_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=_error_payload(
                "UnknownImage", f"no image '{image_id}'"))
        return {"corpus_version": state.corpus_version, "id": im.id,
                "class_name": im.class_name, "kind": im.kind, "iteration": im.iteration,
                "caption": im.caption, "image_path": im.image_path,
                "prompt_id": im.prompt_id,
                "labels": state.corpus.labels_of(im.id),
                "prediction": list(im.prediction) if im.prediction else None}

    @app.get("/sessions/{sid}/labels")
    def labels(sid: str):
        """Ranked label list for the info panel: counts for the pie glyphs
        plus the generated/original ratio used for re-ranking."""
        state = store.get(sid).state
        kind_of = {im.id: im.kind for im in state.corpus.images}
        rows = []
        for la in state.corpus.labels:
            members = state.corpus.images_of(la.id)
            orig = sum(1 for m in members if kind_of[m] == "original")
            gen = len(members) - orig
            rows.append({"id": la.id, "text": la.text, "frequency": la.frequency,
                         "original_count": orig, "generated_count": gen,
                         "ratio": gen / orig if orig else float(gen)})
        rows.sort(key=lambda r: (-r["ratio"], r["id"]))
        return {"corpus_version": state.corpus_version, "labels": rows}

    @app.get("/sessions/{sid}/events")
    def events(sid: str):
        state = store.get(sid).state
        return {"corpus_version": state.corpus_version, "events": list(state.events)}

    @app.get("/sessions/{sid}/jobs/{job_id}")
    def job_status(sid: str, job_id: str):
        session = store.get(sid)
        job = session.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=_error_payload(
                "UnknownJob", f"no job '{job_id}'"))
        return {"job_id": job.id, "status": job.status, "class_name": job.class_name,
                "prompt_id": job.prompt_id, "error": job.error}

    @app.post("/sessions/{sid}/feedback")
    def feedback(sid: str, body: FeedbackBody):
        session = store.get(sid)
        with session.lock:
            state = session.state
            running = [j for j in session.jobs.values()
                       if j.class_name == body.class_name and j.status == "running"]
            if running:
                raise HTTPException(status_code=409, detail=_error_payload(
                    "ConflictingJob",
                    f"class '{body.class_name}' already has a running job",
                    {"job_id": running[0].id}))
            try:
                action = FeedbackAction(kind=body.kind,
                                        image_ids=frozenset(body.image_ids),
                                        class_name=body.class_name)
                action.validate_against(state.corpus)
            except (UnknownImageIds, ValueError) as exc:
                raise HTTPException(status_code=422, detail=_error_payload(
                    exc.__class__.__name__, str(exc)))
            job = Job(id=str(uuid.uuid4()), class_name=body.class_name)
            session.jobs[job.id] = job
            event = _event("feedback", kind=body.kind, class_name=body.class_name,
                           count=len(body.image_ids), job_id=job.id)
            session.state = replace(state, events=state.events + (event,))
            _persist_events(session, [event])

        def run():
            try:
                prompt = state.prompts[body.class_name]
                cfg = session.config
                new_prompt, trace = evolve(
                    prompt, action, state.corpus, session.providers,
                    EvolveConfig(n_proxies=cfg.n_proxies, epsilon=cfg.epsilon,
                                 max_iter=cfg.max_iter, seed=cfg.seed))
                with session.lock:
                    cur = session.state
                    pid = f"pending-{next(session.counter)}"
                    pending = dict(cur.pending)
                    pending[pid] = {"prompt": new_prompt, "feedback": action,
                                    "trace": trace, "job_id": job.id}
                    session.state = replace(cur, pending=pending)
                    job.prompt_id = pid
                    job.status = "done"
            except Exception as exc:  # job failures surface via status polling
                job.error = str(exc)
                job.status = "failed"

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job.id}

    @app.get("/sessions/{sid}/pending/{pid}/trace")
    def pending_trace(sid: str, pid: str):
        state = store.get(sid).state
        if pid not in state.pending:
            raise HTTPException(status_code=404, detail=_error_payload(
                "UnknownPrompt", f"no pending prompt '{pid}'"))
        entry = state.pending[pid]
        return {"corpus_version": state.corpus_version,
                "prompt": entry["prompt"].as_dict(),
                "trace": entry["trace"].as_dict()}

    @app.post("/sessions/{sid}/prompts/{pid}/accept")
    def accept(sid: str, pid: str):
        session = store.get(sid)
        with session.lock:
            state = session.state
            if pid not in state.pending:
                raise HTTPException(status_code=404, detail=_error_payload(
                    "UnknownPrompt", f"no pending prompt '{pid}'"))
            entry = state.pending[pid]
            prompt: PromptTemplate = entry["prompt"]
            cfg = session.config
            new_version = state.corpus_version + 1
            iteration = max((im.iteration for im in state.corpus.images), default=0) + 1

            class_embs = session.providers.embedder.embed(list(state.corpus.classes))
            vectors = session.providers.generator.generate_proxies(
                prompt, cfg.images_per_accept, seed=new_version)
            label_ids = [la.id for la in state.corpus.labels]
            label_mat = state.corpus.label_matrix()
            new_images, new_edges = [], []
            for i, vec in enumerate(vectors):
                iid = f"g{new_version}_{prompt.class_name}_{i:03d}"
                pred = _zero_shot_prediction(vec, class_embs)
                new_images.append(ImageRecord(
                    id=iid, class_name=prompt.class_name, kind=GENERATED,
                    iteration=iteration, embedding=tuple(float(x) for x in vec),
                    prompt_id=f"{prompt.id}@v{prompt.version}",
                    prediction=pred))
                sims = label_mat @ vec / (
                    np.linalg.norm(label_mat, axis=1) * max(np.linalg.norm(vec), 1e-12))
                for j in np.argsort(-sims)[:2]:
                    new_edges.append((iid, label_ids[int(j)], float(1.0 - sims[int(j)])))

            corpus = state.corpus.with_images(new_images, new_edges)
            layout = _fit_layout(corpus, cfg)
            tree = _build_tree(corpus, session.providers)
            timeline = state.timeline + (_snapshot_or_null(corpus, iteration),)
            prompts = dict(state.prompts)
            prompts[prompt.class_name] = prompt
            pending = {k: v for k, v in state.pending.items() if k != pid}
            event = _event("accept", prompt_id=pid, class_name=prompt.class_name,
                           corpus_version=new_version)
            session.state = SessionState(
                corpus_version=new_version, corpus=corpus, layout=layout, tree=tree,
                timeline=timeline, prompts=prompts, pending=pending,
                events=state.events + (event,))
            _persist_events(session, [event])
            return {"corpus_version": new_version,
                    "generated": len(new_images), "iteration": iteration}

    @app.post("/sessions/{sid}/prompts/{pid}/reject")
    def reject(sid: str, pid: str):
        session = store.get(sid)
        with session.lock:
            state = session.state
            if pid not in state.pending:
                raise HTTPException(status_code=404, detail=_error_payload(
                    "UnknownPrompt", f"no pending prompt '{pid}'"))
            pending = {k: v for k, v in state.pending.items() if k != pid}
            event = _event("reject", prompt_id=pid)
            session.state = replace(state, pending=pending,
                                    events=state.events + (event,))
            _persist_events(session, [event])
        return {"ok": True, "corpus_version": session.state.corpus_version}

    @app.patch("/sessions/{sid}/prompts/{pid}")
    def edit_prompt(sid: str, pid: str, body: PromptEditBody):
        session = store.get(sid)
        with session.lock:
            state = session.state
            match = [p for p in state.prompts.values() if p.id == pid]
            if not match:
                raise HTTPException(status_code=404, detail=_error_payload(
                    "UnknownPrompt", f"no prompt '{pid}'"))
            try:
                validate_template(body.text)
            except DatasteerError as exc:
                raise HTTPException(status_code=422, detail=_error_payload(
                    "InvalidTemplate", str(exc)))
            old = match[0]
            new = old.with_text(body.text)
            prompts = dict(state.prompts)
            prompts[new.class_name] = new
            event = _event("edit", prompt_id=pid, version=new.version)
            session.state = replace(state, prompts=prompts,
                                    events=state.events + (event,))
            _persist_events(session, [event])
            return {"ok": True, "version": new.version}

    @app.delete("/sessions/{sid}/prompts/{pid}")
    def delete_prompt(sid: str, pid: str):
        session = store.get(sid)
        with session.lock:
            state = session.state
            match = [cls for cls, p in state.prompts.items() if p.id == pid]
            if not match:
                raise HTTPException(status_code=404, detail=_error_payload(
                    "UnknownPrompt", f"no prompt '{pid}'"))
            prompts = {c: p for c, p in state.prompts.items() if c != match[0]}
            event = _event("delete", prompt_id=pid)
            session.state = replace(state, prompts=prompts,
                                    events=state.events + (event,))
            _persist_events(session, [event])
        return {"ok": True}

    return app


app = create_app()
