/**
 * 2D orthographic projection of root-relative joint positions for the
 * stick-figure views. Front view maps (x, y), side view maps (z, y);
 * y points up on screen.
 */

import type { SkeletonDoc } from "./api.js";

export type ViewKind = "front" | "side";

export interface Projected {
  x: number;
  y: number;
}

export function boneEdges(doc: SkeletonDoc): Array<[number, number]> {
  const edges: Array<[number, number]> = [];
  doc.joints.forEach((joint, index) => {
    if (joint.parent >= 0) edges.push([joint.parent, index]);
  });
  return edges;
}

export function projectJoint(
  position: number[],
  view: ViewKind,
  width: number,
  height: number,
  scale: number,
): Projected {
  const horizontal = view === "front" ? position[0] : position[2];
  const vertical = position[1];
  return {
    x: width / 2 + horizontal * scale,
    y: height * 0.75 - vertical * scale,
  };
}

export function projectFrame(
  joints: number[][],
  view: ViewKind,
  width: number,
  height: number,
  scale = 220,
): Projected[] {
  return joints.map((p) => projectJoint(p, view, width, height, scale));
}
