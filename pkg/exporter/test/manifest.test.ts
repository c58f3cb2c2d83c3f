import { describe, expect, it } from "vitest";

import { assignSplits, encodeManifest } from "../src/manifest.js";

function spec(overrides: Partial<Parameters<typeof assignSplits>[0]> = {}) {
  return {
    classItems: new Map([
      [0, [0, 1, 2, 3]],
      [1, [4, 5, 6, 7]],
    ]),
    knownClasses: new Set([0]),
    labeledFraction: 0.5,
    valFraction: 0.0,
    seed: 9,
    ...overrides,
  };
}

describe("split assignment", () => {
  it("labels exactly half of each known class", () => {
    const rows = assignSplits(spec());
    const labeled = rows.filter((r) => r.split === "labeled");
    expect(labeled).toHaveLength(2);
    expect(labeled.every((r) => r.gtClass === 0)).toBe(true);
  });

  it("unknown classes never contain labeled items", () => {
    const rows = assignSplits(spec());
    expect(rows.filter((r) => r.gtClass === 1 && r.split === "labeled")).toHaveLength(0);
    expect(rows.filter((r) => r.gtClass === 1 && !r.isKnownClass)).toHaveLength(4);
  });

  it("odd class sizes round the labeled quota up", () => {
    const rows = assignSplits(
      spec({ classItems: new Map([[0, [0, 1, 2, 3, 4]]]), knownClasses: new Set([0]) }),
    );
    expect(rows.filter((r) => r.split === "labeled")).toHaveLength(3); // ceil(0.5 * 5)
  });

  it("validation is carved before the labeled quota", () => {
    const rows = assignSplits(spec({ valFraction: 0.25 }));
    const known = rows.filter((r) => r.gtClass === 0);
    expect(known.filter((r) => r.split === "validation")).toHaveLength(1);
    expect(known.filter((r) => r.split === "labeled")).toHaveLength(2);
    const unknown = rows.filter((r) => r.gtClass === 1);
    expect(unknown.filter((r) => r.split === "validation")).toHaveLength(1);
    expect(unknown.filter((r) => r.split === "unlabeled")).toHaveLength(3);
  });

  it("is deterministic for a fixed seed and changes with the seed", () => {
    const a = encodeManifest(assignSplits(spec()));
    const b = encodeManifest(assignSplits(spec()));
    expect(a).toBe(b);
    const c = encodeManifest(assignSplits(spec({ seed: 10 })));
    expect(c).not.toBe(a);
  });

  it("rejects an impossible quota", () => {
    expect(() =>
      assignSplits(spec({ labeledFraction: 1.0, valFraction: 0.25 })),
    ).toThrow(/exceeds/);
  });

  it("encodes the pipeline header and row format", () => {
    const text = encodeManifest(assignSplits(spec()));
    const lines = text.trim().split("\n");
    expect(lines[0]).toBe("index,gt_class,is_known_class,split");
    expect(lines).toHaveLength(9);
    expect(lines[1]).toMatch(/^0,0,1,(labeled|unlabeled)$/);
  });
});
