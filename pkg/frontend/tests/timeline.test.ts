import { describe, expect, it } from "vitest";

import { TimelineModel } from "../src/timeline.js";

describe("TimelineModel", () => {
  it("holds the worked-example markers sorted", () => {
    const tl = new TimelineModel(9, [6, 1, 4, 2, 7]);
    expect(tl.markers).toEqual([1, 2, 4, 6, 7]);
  });

  it("moves a marker to a free frame", () => {
    const tl = new TimelineModel(30, [5, 10, 20]);
    expect(tl.beginDrag(10)).toBe(true);
    tl.dragTo(15);
    const result = tl.endDrag();
    expect(result).toEqual({ kind: "moved", from: 10, to: 15 });
    expect(tl.markers).toEqual([5, 15, 20]);
  });

  it("snaps back when dropping onto an occupied frame", () => {
    const tl = new TimelineModel(30, [5, 10, 20]);
    tl.beginDrag(10);
    tl.dragTo(20);
    const result = tl.endDrag();
    expect(result.kind).toBe("snapback");
    expect(tl.markers).toEqual([5, 10, 20]);
  });

  it("clamps drags outside [0, T)", () => {
    const tl = new TimelineModel(12, [3]);
    tl.beginDrag(3);
    tl.dragTo(99);
    expect(tl.dragFrame).toBe(11);
    tl.dragTo(-4);
    expect(tl.dragFrame).toBe(0);
    const result = tl.endDrag();
    expect(result).toEqual({ kind: "moved", from: 3, to: 0 });
  });

  it("allows at most one drag in progress", () => {
    const tl = new TimelineModel(20, [4, 8]);
    expect(tl.beginDrag(4)).toBe(true);
    expect(tl.beginDrag(8)).toBe(false);
  });

  it("ignores drags that do not start on a marker", () => {
    const tl = new TimelineModel(20, [4]);
    expect(tl.beginDrag(5)).toBe(false);
    expect(tl.endDrag().kind).toBe("noop");
  });

  it("rolls an optimistic move back", () => {
    const tl = new TimelineModel(30, [5, 10]);
    tl.beginDrag(10);
    tl.dragTo(12);
    tl.endDrag();
    expect(tl.markers).toEqual([5, 12]);
    tl.rollback(10, 12);
    expect(tl.markers).toEqual([5, 10]);
  });
});
