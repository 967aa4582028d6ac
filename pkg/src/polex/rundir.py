"""On-disk layout of a policy-extraction run.

    rundir/
      schema.txt          table definitions
      constraints.txt     editable constraint config
      handlers/*.hdl      handler programs
      intern.json         string interning table (created on demand)
      transcripts/<inputId>.jsonl
      inputs/<inputId>.json
      policies/<handler>.sql, policies/final.sql
      reports/

Every policy view's witness input id resolves to a file under inputs/.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .constraints import expand_all, parse_constraint_file
from .dsl import HandlerProgram, parse_handlers
from .instance import ConcreteInput
from .normal import normalize_query
from .policygen import View
from .schema import Interner, Schema, load_schema
from .sqlparser import parse_sql
from .transcript import Transcript, transcript_from_jsonl, transcript_to_jsonl
from .unparse import unparse_view


class RunDirError(Exception):
    pass


@dataclass
class RunDirectory:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    # -- paths -------------------------------------------------------------

    @property
    def schema_path(self) -> Path:
        return self.root / "schema.txt"

    @property
    def constraints_path(self) -> Path:
        return self.root / "constraints.txt"

    @property
    def handlers_dir(self) -> Path:
        return self.root / "handlers"

    @property
    def transcripts_dir(self) -> Path:
        return self.root / "transcripts"

    @property
    def inputs_dir(self) -> Path:
        return self.root / "inputs"

    @property
    def policies_dir(self) -> Path:
        return self.root / "policies"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def intern_path(self) -> Path:
        return self.root / "intern.json"

    # -- inputs ------------------------------------------------------------

    def load_schema(self) -> Schema:
        if not self.schema_path.exists():
            raise RunDirError(f"no schema file at {self.schema_path}")
        return load_schema(self.schema_path)

    def load_constraints(self, schema: Schema):
        """Returns (expanded constraints, interner)."""
        interner = Interner.load(self.intern_path)
        items = []
        if self.constraints_path.exists():
            items = parse_constraint_file(
                self.constraints_path.read_text(encoding="utf-8"), schema, interner
            )
        constraints = expand_all(items, schema)
        interner.save(self.intern_path)
        return constraints, interner

    def load_handlers(self) -> dict[str, tuple[HandlerProgram, Path]]:
        out: dict[str, tuple[HandlerProgram, Path]] = {}
        if not self.handlers_dir.is_dir():
            return out
        for path in sorted(self.handlers_dir.glob("*.hdl")):
            for program in parse_handlers(path.read_text(encoding="utf-8")):
                if program.name in out:
                    raise RunDirError(f"duplicate handler {program.name!r}")
                out[program.name] = (program, path)
        return out

    # -- transcripts and inputs ---------------------------------------------

    def write_transcript(self, t: Transcript, meta: dict) -> Path:
        self.transcripts_dir.mkdir(parents=True, exist_ok=True)
        path = self.transcripts_dir / f"{t.input_id}.jsonl"
        path.write_text(transcript_to_jsonl(t, meta), encoding="utf-8")
        return path

    def read_transcript(self, input_id: str) -> tuple[dict, Transcript]:
        path = self.transcripts_dir / f"{input_id}.jsonl"
        if not path.exists():
            raise RunDirError(f"no transcript for input id {input_id!r}")
        return transcript_from_jsonl(path.read_text(encoding="utf-8"))

    def transcript_ids(self, handler: str | None = None) -> list[str]:
        if not self.transcripts_dir.is_dir():
            return []
        ids = sorted(p.stem for p in self.transcripts_dir.glob("*.jsonl"))
        if handler is not None:
            ids = [i for i in ids if i.rsplit("-", 1)[0] == handler]
        return ids

    def write_input(self, ci: ConcreteInput, schema: Schema) -> Path:
        self.inputs_dir.mkdir(parents=True, exist_ok=True)
        path = self.inputs_dir / f"{ci.input_id}.json"
        ci.save(path, schema)
        return path

    def read_input(self, input_id: str, schema: Schema) -> ConcreteInput:
        path = self.inputs_dir / f"{input_id}.json"
        if not path.exists():
            raise RunDirError(f"no input for id {input_id!r}")
        return ConcreteInput.load(path, schema)

    # -- policies ------------------------------------------------------------

    def policy_path(self, name: str) -> Path:
        return self.policies_dir / f"{name}.sql"

    def write_policy(self, name: str, views: list[View], schema: Schema) -> Path:
        self.policies_dir.mkdir(parents=True, exist_ok=True)
        path = self.policy_path(name)
        path.write_text(render_policy(views, schema), encoding="utf-8")
        return path


def render_policy(views: list[View], schema: Schema) -> str:
    chunks = []
    for k, v in enumerate(views, start=1):
        header = f"-- view {k}"
        if v.handler:
            header += f"  handler={v.handler}"
        if v.witness:
            header += f"  witness={v.witness}"
        chunks.append(f"{header}\n{unparse_view(v.nf, schema)};\n")
    return "\n".join(chunks)


_HEADER_RE = re.compile(r"--\s*view\s+\d+(?:\s+handler=(?P<handler>\S+))?(?:\s+witness=(?P<witness>\S+))?")


def parse_policy_text(text: str, schema: Schema) -> list[View]:
    """Parse a policy file: `;`-terminated view statements with optional
    `-- view k handler=... witness=...` headers."""
    views: list[View] = []
    handler = witness = ""
    statement_lines: list[str] = []

    def flush():
        nonlocal handler, witness, statement_lines
        stmt = "\n".join(statement_lines).strip()
        statement_lines = []
        if not stmt:
            return
        variants = normalize_query(parse_sql(stmt), schema)
        if len(variants) != 1 or not variants[0].lossless:
            raise RunDirError(f"policy view is not a PSJ query: {stmt!r}")
        views.append(View(variants[0].nf, handler=handler, witness=witness))
        handler = witness = ""

    for raw in text.splitlines():
        line = raw.rstrip()
        m = _HEADER_RE.match(line.strip())
        if m:
            handler = m.group("handler") or ""
            witness = m.group("witness") or ""
            continue
        if line.strip().startswith("--") or not line.strip():
            continue
        if line.strip().endswith(";"):
            statement_lines.append(line.strip()[:-1])
            flush()
        else:
            statement_lines.append(line)
    if statement_lines:
        flush()
    return views


def load_policy_file(path: str | Path, schema: Schema) -> list[View]:
    p = Path(path)
    if not p.exists():
        raise RunDirError(f"no policy file at {p}")
    return parse_policy_text(p.read_text(encoding="utf-8"), schema)


def save_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")
