"""Virtual study group: agent graph construction and orchestration.

The group is organised bottom-up: per organism, a junior investigator (A)
studies two GO terms, a junior critic (B) challenges A's report, a senior
reviews both, and a single principal investigator synthesises the four
senior reports. Within one stage tasks run concurrently; stages are strict
barriers, and the transcript is always reduced in canonical task order.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from gostudy.backend import (
    BackendFailure,
    ChatBackend,
    RetryPolicy,
    SamplingParams,
    chat,
)
from gostudy.errors import ConfigError, GostudyError
from gostudy.ontology import check_term_id

ROLE_JUNIOR_A = "junior_a"
ROLE_JUNIOR_B = "junior_b"
ROLE_SENIOR = "senior"
ROLE_PI = "principal_investigator"
ROLES = (ROLE_JUNIOR_A, ROLE_JUNIOR_B, ROLE_SENIOR, ROLE_PI)

PI_ID = "principal_investigator"

UPSTREAM_HEADER = "=== Report from {name} ===\n"

STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"
STATUS_SKIPPED = "skipped"

_EPOCH = "1970-01-01T00:00:00Z"


class VsgError(GostudyError):
    """Base class for study-group construction and orchestration errors."""


class IncompleteConfig(VsgError):
    """The configuration is missing organisms, terms or model assignments."""


class DuplicateAgent(VsgError):
    """Two agents resolve to the same id."""


class MissingDependency(VsgError):
    """A prompt references an upstream output that is not available."""


class CyclicTasks(VsgError):
    """Task dependencies do not form the expected layered DAG."""


class RunFailed(VsgError):
    """At least one task failed; the partial transcript is attached."""

    def __init__(self, message: str, transcript: Transcript) -> None:
        super().__init__(message)
        self.transcript = transcript


@dataclass(frozen=True)
class OrganismSpec:
    """One model organism with its two input GO terms."""

    name: str  # short key, e.g. "fruit_fly"
    species: str  # display name used in task text, e.g. "Drosophila melanogaster"
    terms: tuple[tuple[str, str], ...]  # (term id, human-readable label) pairs


@dataclass(frozen=True)
class VsgConfig:
    """Resolved study-group configuration (see config.load_pipeline_config)."""

    organisms: tuple[OrganismSpec, ...]
    models: dict[str, str]  # role -> model identifier
    personas: dict[str, str] = field(default_factory=dict)  # role -> template
    backend_url: str = ""
    response_path: str = "choices.0.message.content"
    sampling: SamplingParams = SamplingParams()
    retry: RetryPolicy = RetryPolicy()
    seniors_see_task_statement: bool = True

    def to_dict(self) -> dict:
        return {
            "organisms": [
                {"name": o.name, "species": o.species, "terms": [list(t) for t in o.terms]}
                for o in self.organisms
            ],
            "models": dict(sorted(self.models.items())),
            "personas": dict(sorted(self.personas.items())),
            "backend_url": self.backend_url,
            "response_path": self.response_path,
            "sampling": {
                "temperature": self.sampling.temperature,
                "seed": self.sampling.seed,
            },
            "retry": {
                "attempts": self.retry.attempts,
                "backoff_base": self.retry.backoff_base,
                "timeout": self.retry.timeout,
            },
            "seniors_see_task_statement": self.seniors_see_task_statement,
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AgentSpec:
    id: str
    role: str
    organism: str | None
    model: str
    persona: str
    name: str  # display name used in prompts and reports


@dataclass(frozen=True)
class TaskSpec:
    id: str
    agent: str
    layer: int  # 1 = juniors, 2 = seniors, 3 = principal investigator
    instruction: str
    inputs: tuple[str, ...] = ()
    go_terms: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class AgentGraph:
    agents: dict[str, AgentSpec]
    tasks: tuple[TaskSpec, ...]

    def agent(self, agent_id: str) -> AgentSpec:
        return self.agents[agent_id]

    def task(self, task_id: str) -> TaskSpec:
        for task in self.tasks:
            if task.id == task_id:
                return task
        raise KeyError(task_id)

    def dependency_edge_count(self) -> int:
        return sum(len(task.inputs) for task in self.tasks)

    def waves(self) -> list[list[TaskSpec]]:
        """Execution stages: junior A, junior B, seniors, then the PI."""
        def stage(role: str) -> list[TaskSpec]:
            return [t for t in self.tasks if self.agents[t.agent].role == role]

        return [stage(role) for role in ROLES]


def _display_organism(name: str) -> str:
    return name.replace("_", " ").title()


def _join_names(names: list[str]) -> str:
    if len(names) == 1:
        return names[0]
    if len(names) == 2:
        return f"{names[0]} and {names[1]}"
    return ", ".join(names[:-1]) + f", and {names[-1]}"


def _persona_for(cfg: VsgConfig, role: str, organism: OrganismSpec | None) -> str:
    template = cfg.personas.get(role, "")
    if organism is not None:
        template = template.replace("{organism}", _display_organism(organism.name))
        template = template.replace("{species}", organism.species)
    return template


def build_study_group(cfg: VsgConfig) -> AgentGraph:
    """Build the layered agent graph from a resolved configuration.

    With n organisms the graph has 3n+1 agents and as many tasks: for each
    organism an investigator, a critic and a senior reviewer, plus one
    principal investigator depending on every senior.
    """
    if not cfg.organisms:
        raise IncompleteConfig("configuration lists no organisms")
    for role in ROLES:
        if not cfg.models.get(role):
            raise IncompleteConfig(f"no model assigned to role {role!r}")

    agents: dict[str, AgentSpec] = {}
    juniors_a: list[TaskSpec] = []
    juniors_b: list[TaskSpec] = []
    seniors: list[TaskSpec] = []

    def add_agent(agent: AgentSpec) -> None:
        if agent.id in agents:
            raise DuplicateAgent(f"duplicate agent id: {agent.id}")
        agents[agent.id] = agent

    for organism in cfg.organisms:
        if len(organism.terms) != 2:
            raise IncompleteConfig(
                f"organism {organism.name!r} needs exactly two GO terms,"
                f" got {len(organism.terms)}"
            )
        for term_id, _label in organism.terms:
            check_term_id(term_id)

        display = _display_organism(organism.name)
        a_id = f"{organism.name}.junior_a"
        b_id = f"{organism.name}.junior_b"
        s_id = f"{organism.name}.senior"
        a_name = f"Virtual Junior {display} Researcher A"
        b_name = f"Virtual Junior {display} Researcher B"
        s_name = f"Virtual Senior {display} Researcher"

        add_agent(AgentSpec(a_id, ROLE_JUNIOR_A, organism.name, cfg.models[ROLE_JUNIOR_A],
                            _persona_for(cfg, ROLE_JUNIOR_A, organism), a_name))
        add_agent(AgentSpec(b_id, ROLE_JUNIOR_B, organism.name, cfg.models[ROLE_JUNIOR_B],
                            _persona_for(cfg, ROLE_JUNIOR_B, organism), b_name))
        add_agent(AgentSpec(s_id, ROLE_SENIOR, organism.name, cfg.models[ROLE_SENIOR],
                            _persona_for(cfg, ROLE_SENIOR, organism), s_name))

        labels = [label for _term, label in organism.terms]
        investigate = (
            f"Investigate the associations between {labels[0]}, {labels[1]}"
            f" and ageing processes in {organism.species}."
        )
        juniors_a.append(TaskSpec(
            id=a_id, agent=a_id, layer=1,
            instruction=investigate,
            go_terms=tuple(organism.terms),
        ))
        juniors_b.append(TaskSpec(
            id=b_id, agent=b_id, layer=1,
            instruction=f"Provide critical comments against the report made by {a_name}.",
            inputs=(a_id,),
        ))
        senior_instruction = (
            f"Provide critical comments against the reports made by {a_name}"
            f" and {b_name}."
        )
        if cfg.seniors_see_task_statement:
            senior_instruction += f"\n\nThe reports under review respond to this task: {investigate}"
        seniors.append(TaskSpec(
            id=s_id, agent=s_id, layer=2,
            instruction=senior_instruction,
            inputs=(a_id, b_id),
        ))

    add_agent(AgentSpec(PI_ID, ROLE_PI, None, cfg.models[ROLE_PI],
                        _persona_for(cfg, ROLE_PI, None), "Virtual Ageing Professor"))
    senior_names = [agents[t.agent].name for t in seniors]
    pi_task = TaskSpec(
        id=PI_ID, agent=PI_ID, layer=3,
        instruction=(
            "Provide critical comments against the reports made by"
            f" {_join_names(senior_names)}."
        ),
        inputs=tuple(t.id for t in seniors),
    )

    # Canonical order: layer ascending, organisms as configured, A before B.
    layer1 = [task for pair in zip(juniors_a, juniors_b) for task in pair]
    tasks = tuple(layer1 + seniors + [pi_task])
    return AgentGraph(agents=agents, tasks=tasks)


def render_prompt(task: TaskSpec, upstream: dict[str, str], graph: AgentGraph) -> str:
    """Concatenate persona, instruction and upstream reports deterministically."""
    agent = graph.agent(task.agent)
    parts: list[str] = []
    if agent.persona:
        parts.append(agent.persona)
    parts.append(task.instruction)
    for dep_id in task.inputs:
        if dep_id not in upstream:
            raise MissingDependency(f"task {task.id}: upstream output {dep_id!r} unresolved")
        dep_agent = graph.agent(graph.task(dep_id).agent)
        parts.append(UPSTREAM_HEADER.format(name=dep_agent.name) + upstream[dep_id])
    return "\n\n".join(parts)


@dataclass(frozen=True)
class TaskOutput:
    task_id: str
    agent_id: str
    agent_name: str
    model: str
    prompt: str
    response: str
    latency_ms: int
    status: str = STATUS_COMPLETED
    retries: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "agent_id": self.agent_id,
            "agent_name": self.agent_name,
            "model": self.model,
            "prompt": self.prompt,
            "response": self.response,
            "latency_ms": self.latency_ms,
            "status": self.status,
            "retries": self.retries,
            "error": self.error,
        }


@dataclass(frozen=True)
class Transcript:
    run_id: str
    started_at: str
    finished_at: str
    outputs: tuple[TaskOutput, ...]
    config_digest: str = ""

    def succeeded(self) -> bool:
        return all(o.status == STATUS_COMPLETED for o in self.outputs)

    def output(self, task_id: str) -> TaskOutput:
        for out in self.outputs:
            if out.task_id == task_id:
                return out
        raise KeyError(task_id)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "config_digest": self.config_digest,
            "outputs": [o.to_dict() for o in self.outputs],
        }

    def canonical(self) -> Transcript:
        """Run-independent form: run id, timestamps and latencies zeroed."""
        return Transcript(
            run_id="",
            started_at=_EPOCH,
            finished_at=_EPOCH,
            outputs=tuple(replace(o, latency_ms=0) for o in self.outputs),
            config_digest=self.config_digest,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> Transcript:
        outputs = tuple(
            TaskOutput(
                task_id=o["task_id"],
                agent_id=o["agent_id"],
                agent_name=o.get("agent_name", o["agent_id"]),
                model=o.get("model", ""),
                prompt=o.get("prompt", ""),
                response=o.get("response", ""),
                latency_ms=int(o.get("latency_ms", 0)),
                status=o.get("status", STATUS_COMPLETED),
                retries=int(o.get("retries", 0)),
                error=o.get("error"),
            )
            for o in doc["outputs"]
        )
        return cls(
            run_id=doc.get("run_id", ""),
            started_at=doc.get("started_at", _EPOCH),
            finished_at=doc.get("finished_at", _EPOCH),
            outputs=outputs,
            config_digest=doc.get("config_digest", ""),
        )


def write_transcript(transcript: Transcript, out_dir: Path) -> Path:
    """Persist raw and canonical transcript JSON under out_dir/<run_id>/."""
    run_dir = out_dir / transcript.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "transcript.json").write_text(transcript.to_json(), encoding="utf-8")
    (run_dir / "transcript.canonical.json").write_text(
        transcript.canonical().to_json(), encoding="utf-8"
    )
    return run_dir


def read_transcript(path: Path) -> Transcript:
    with open(path, encoding="utf-8") as handle:
        try:
            return Transcript.from_dict(json.load(handle))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: not a transcript file ({exc})") from exc


@dataclass(frozen=True)
class RunParams:
    sampling: SamplingParams = SamplingParams()
    retry: RetryPolicy = RetryPolicy()
    max_workers: int = 4
    out_dir: Path | None = None
    run_id: str | None = None
    config_digest: str = ""


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _new_run_id() -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return f"{stamp}-{uuid.uuid4().hex[:8]}"


def _check_layering(graph: AgentGraph) -> None:
    seen: set[str] = set()
    for task in graph.tasks:
        if any(dep not in seen for dep in task.inputs):
            raise CyclicTasks(f"task {task.id} depends on a later or missing task")
        seen.add(task.id)


def orchestrate(graph: AgentGraph, backend: ChatBackend, params: RunParams) -> Transcript:
    """Run every task stage by stage and return the persisted transcript.

    Stage N+1 starts only once stage N has finished. A failed task marks its
    dependents skipped; remaining independent tasks still run. If anything
    failed, the partial transcript is persisted and RunFailed is raised with
    the transcript attached.
    """
    _check_layering(graph)
    run_id = params.run_id or _new_run_id()
    started = _now()

    outputs: dict[str, TaskOutput] = {}
    status: dict[str, str] = {}
    responses: dict[str, str] = {}
    lock = threading.Lock()

    def run_task(task: TaskSpec) -> TaskOutput:
        agent = graph.agent(task.agent)
        with lock:
            upstream = {dep: responses[dep] for dep in task.inputs}
        prompt = render_prompt(task, upstream, graph)
        try:
            result = chat(
                backend,
                agent.model,
                prompt,
                sampling=params.sampling,
                policy=params.retry,
                task_id=task.id,
            )
        except BackendFailure as exc:
            return TaskOutput(
                task_id=task.id, agent_id=agent.id, agent_name=agent.name,
                model=agent.model, prompt=prompt, response="", latency_ms=0,
                status=STATUS_FAILED, retries=getattr(exc, "retries", 0),
                error=str(exc),
            )
        return TaskOutput(
            task_id=task.id, agent_id=agent.id, agent_name=agent.name,
            model=agent.model, prompt=prompt, response=result.text,
            latency_ms=result.latency_ms, retries=result.retries,
        )

    for wave in graph.waves():
        runnable: list[TaskSpec] = []
        for task in wave:
            if all(status.get(dep) == STATUS_COMPLETED for dep in task.inputs):
                runnable.append(task)
            else:
                agent = graph.agent(task.agent)
                outputs[task.id] = TaskOutput(
                    task_id=task.id, agent_id=agent.id, agent_name=agent.name,
                    model=agent.model, prompt="", response="", latency_ms=0,
                    status=STATUS_SKIPPED, error="upstream task did not complete",
                )
                status[task.id] = STATUS_SKIPPED
        if not runnable:
            continue
        with ThreadPoolExecutor(max_workers=max(1, min(params.max_workers, len(runnable)))) as pool:
            results = list(pool.map(run_task, runnable))
        for task, out in zip(runnable, results):
            outputs[task.id] = out
            status[task.id] = out.status
            if out.status == STATUS_COMPLETED:
                with lock:
                    responses[task.id] = out.response

    transcript = Transcript(
        run_id=run_id,
        started_at=started,
        finished_at=_now(),
        outputs=tuple(outputs[task.id] for task in graph.tasks),
        config_digest=params.config_digest,
    )
    if params.out_dir is not None:
        write_transcript(transcript, Path(params.out_dir))
    if not transcript.succeeded():
        failed = [o.task_id for o in transcript.outputs if o.status == STATUS_FAILED]
        raise RunFailed(f"tasks failed: {', '.join(failed)}", transcript)
    return transcript
