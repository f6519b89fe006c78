// Runtime validation of wire frames against the engine's own schema file
// (records.schema.json, copied verbatim into dist at build time). Only the
// keyword subset that file actually uses is implemented; an unknown keyword
// is a loud error rather than a silent pass, so schema growth cannot
// silently outrun the console.

import type { EngineMessage } from "./records.js";

export interface SchemaError {
  path: string;
  message: string;
}

interface SchemaNode {
  [key: string]: unknown;
}

const IGNORED = new Set(["$schema", "$id", "title", "description"]);
const KNOWN = new Set([
  "$ref", "type", "const", "enum", "properties", "required",
  "additionalProperties", "allOf", "oneOf", "if", "then", "items",
  "minimum", "maximum", "exclusiveMinimum", "minLength",
  "minItems", "maxItems",
]);

function typeOk(t: string, v: unknown): boolean {
  switch (t) {
    case "object":
      return typeof v === "object" && v !== null && !Array.isArray(v);
    case "array":
      return Array.isArray(v);
    case "string":
      return typeof v === "string";
    case "number":
      return typeof v === "number" && Number.isFinite(v);
    case "integer":
      return typeof v === "number" && Number.isInteger(v);
    case "boolean":
      return typeof v === "boolean";
    case "null":
      return v === null;
    default:
      throw new Error(`unsupported type keyword: ${t}`);
  }
}

export class RecordValidator {
  private defs: Record<string, SchemaNode>;
  private rootRefs: string[];

  constructor(schemaDoc: unknown) {
    const doc = schemaDoc as SchemaNode;
    const defs = doc["$defs"];
    const oneOf = doc["oneOf"];
    if (typeof defs !== "object" || defs === null || !Array.isArray(oneOf)) {
      throw new Error("schema document must carry $defs and a root oneOf");
    }
    this.defs = defs as Record<string, SchemaNode>;
    this.rootRefs = oneOf.map((e: SchemaNode) => this.refName(e["$ref"]));
  }

  private refName(ref: unknown): string {
    if (typeof ref !== "string" || !ref.startsWith("#/$defs/")) {
      throw new Error(`unsupported $ref: ${String(ref)}`);
    }
    const name = ref.slice("#/$defs/".length);
    if (!(name in this.defs)) throw new Error(`unresolved $ref: ${ref}`);
    return name;
  }

  private check(schema: SchemaNode, value: unknown, path: string): SchemaError[] {
    const out: SchemaError[] = [];
    for (const key of Object.keys(schema)) {
      if (!KNOWN.has(key) && !IGNORED.has(key)) {
        throw new Error(`unsupported schema keyword: ${key}`);
      }
    }
    if ("$ref" in schema) {
      return this.check(this.defs[this.refName(schema["$ref"])]!, value, path);
    }
    const t = schema["type"];
    if (typeof t === "string" && !typeOk(t, value)) {
      return [{ path, message: `expected ${t}` }];
    }
    if ("const" in schema && value !== schema["const"]) {
      out.push({ path, message: `expected constant ${JSON.stringify(schema["const"])}` });
    }
    const en = schema["enum"];
    if (Array.isArray(en) && !en.includes(value)) {
      out.push({ path, message: `not one of ${JSON.stringify(en)}` });
    }
    if (typeof value === "number") {
      const min = schema["minimum"];
      const max = schema["maximum"];
      const xmin = schema["exclusiveMinimum"];
      if (typeof min === "number" && value < min) out.push({ path, message: `below minimum ${min}` });
      if (typeof max === "number" && value > max) out.push({ path, message: `above maximum ${max}` });
      if (typeof xmin === "number" && value <= xmin) out.push({ path, message: `must exceed ${xmin}` });
    }
    if (typeof value === "string") {
      const minLen = schema["minLength"];
      if (typeof minLen === "number" && value.length < minLen) {
        out.push({ path, message: `shorter than ${minLen}` });
      }
    }
    if (Array.isArray(value)) {
      const minItems = schema["minItems"];
      const maxItems = schema["maxItems"];
      if (typeof minItems === "number" && value.length < minItems) {
        out.push({ path, message: `fewer than ${minItems} items` });
      }
      if (typeof maxItems === "number" && value.length > maxItems) {
        out.push({ path, message: `more than ${maxItems} items` });
      }
      const items = schema["items"];
      if (items) {
        value.forEach((el, i) => {
          out.push(...this.check(items as SchemaNode, el, `${path}[${i}]`));
        });
      }
    }
    if (typeof value === "object" && value !== null && !Array.isArray(value)) {
      const obj = value as Record<string, unknown>;
      const props = (schema["properties"] ?? {}) as Record<string, SchemaNode>;
      const required = (schema["required"] ?? []) as string[];
      for (const name of required) {
        if (!(name in obj)) out.push({ path, message: `missing required key "${name}"` });
      }
      for (const [name, sub] of Object.entries(props)) {
        if (name in obj) out.push(...this.check(sub, obj[name], `${path}.${name}`));
      }
      if (schema["additionalProperties"] === false) {
        for (const name of Object.keys(obj)) {
          if (!(name in props)) out.push({ path, message: `unexpected key "${name}"` });
        }
      }
    }
    const allOf = schema["allOf"];
    if (Array.isArray(allOf)) {
      for (const sub of allOf) {
        out.push(...this.applyConditional(sub as SchemaNode, value, path));
      }
    }
    const oneOf = schema["oneOf"];
    if (Array.isArray(oneOf)) {
      const passes = oneOf.filter(
        (sub) => this.check(sub as SchemaNode, value, path).length === 0,
      );
      if (passes.length !== 1) {
        out.push({ path, message: `matched ${passes.length} of ${oneOf.length} alternatives` });
      }
    }
    return out;
  }

  private applyConditional(schema: SchemaNode, value: unknown, path: string): SchemaError[] {
    if ("if" in schema) {
      const cond = this.check(schema["if"] as SchemaNode, value, path).length === 0;
      if (cond && schema["then"]) {
        return this.check(schema["then"] as SchemaNode, value, path);
      }
      return [];
    }
    return this.check(schema, value, path);
  }

  // Validate against one named definition (used for outbound steering).
  checkDef(name: string, value: unknown): SchemaError[] {
    const def = this.defs[name];
    if (!def) throw new Error(`no definition named ${name}`);
    return this.check(def, value, "$");
  }

  // Validate a frame against the root: the definition whose discriminator
  // matches is checked, which is equivalent to the schema's oneOf because
  // every alternative pins "rec" (or "t" for steering) to a constant.
  validate(doc: unknown): SchemaError[] {
    if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
      return [{ path: "$", message: "expected object" }];
    }
    const obj = doc as Record<string, unknown>;
    let match: string | null = null;
    for (const name of this.rootRefs) {
      const props = this.defs[name]!["properties"] as Record<string, SchemaNode>;
      const disc = props["rec"] ?? props["t"];
      const key = props["rec"] ? "rec" : "t";
      if (disc && obj[key] === disc["const"]) {
        match = name;
        break;
      }
    }
    if (match === null) {
      return [{ path: "$", message: `unknown record kind ${JSON.stringify(obj["rec"] ?? obj["t"])}` }];
    }
    return this.checkDef(match, doc);
  }
}

export type ParseResult =
  | { ok: true; doc: EngineMessage }
  | { ok: false; errors: SchemaError[]; raw: string };

export function parseEngineMessage(validator: RecordValidator, raw: string): ParseResult {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return { ok: false, errors: [{ path: "$", message: "not valid JSON" }], raw };
  }
  const errors = validator.validate(doc);
  if (errors.length > 0) return { ok: false, errors, raw };
  return { ok: true, doc: doc as EngineMessage };
}
