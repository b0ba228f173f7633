// Annotation overlay: normalized coordinates in, canvas shapes out.
// The geometry functions are pure so tests can check the arithmetic
// without a canvas; drawOverlay maps shapes onto a 2D context.

import { Annotation, AnnotationKind } from "./codec.js";

export interface Point {
  x: number;
  y: number;
}

export type Shape =
  | { kind: "rect"; x: number; y: number; w: number; h: number; caption: string }
  | { kind: "cross"; at: Point; caption: string }
  | { kind: "segments"; points: Point[]; caption: string }
  | { kind: "text"; at: Point; caption: string };

export function denormalize(coord: [number, number], width: number, height: number): Point {
  return { x: coord[0] * width, y: coord[1] * height };
}

function caption(a: Annotation): string {
  return `${a.label} ${a.confidence.toFixed(2)}`;
}

export function annotationShape(a: Annotation, width: number, height: number): Shape | null {
  const pts = a.coords.map((c) => denormalize(c, width, height));
  switch (a.kind) {
    case AnnotationKind.BOX: {
      if (pts.length !== 2) return null;
      const [tl, br] = pts;
      return { kind: "rect", x: tl.x, y: tl.y, w: br.x - tl.x, h: br.y - tl.y, caption: caption(a) };
    }
    case AnnotationKind.POINT:
      if (pts.length !== 1) return null;
      return { kind: "cross", at: pts[0], caption: caption(a) };
    case AnnotationKind.POLYLINE:
      if (pts.length < 2) return null;
      return { kind: "segments", points: pts, caption: caption(a) };
    case AnnotationKind.LABEL:
      if (pts.length !== 1) return null;
      return { kind: "text", at: pts[0], caption: caption(a) };
    default:
      return null;
  }
}

const CROSS_ARM = 6;

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  annotations: Annotation[],
  width: number,
  height: number,
  placeholder: string,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, width, height);
  ctx.lineWidth = 2;
  ctx.font = "12px monospace";

  if (annotations.length === 0) {
    ctx.fillStyle = "#8aa";
    ctx.fillText(placeholder, 10, 20);
    return;
  }

  for (const a of annotations) {
    const shape = annotationShape(a, width, height);
    if (!shape) continue;
    ctx.strokeStyle = "#3ad07a";
    ctx.fillStyle = "#c6f0d8";
    switch (shape.kind) {
      case "rect":
        ctx.strokeRect(shape.x, shape.y, shape.w, shape.h);
        ctx.fillText(shape.caption, shape.x + 2, Math.max(12, shape.y - 4));
        break;
      case "cross":
        ctx.beginPath();
        ctx.moveTo(shape.at.x - CROSS_ARM, shape.at.y);
        ctx.lineTo(shape.at.x + CROSS_ARM, shape.at.y);
        ctx.moveTo(shape.at.x, shape.at.y - CROSS_ARM);
        ctx.lineTo(shape.at.x, shape.at.y + CROSS_ARM);
        ctx.stroke();
        ctx.fillText(shape.caption, shape.at.x + 8, shape.at.y - 4);
        break;
      case "segments":
        ctx.beginPath();
        ctx.moveTo(shape.points[0].x, shape.points[0].y);
        for (const p of shape.points.slice(1)) ctx.lineTo(p.x, p.y);
        ctx.stroke();
        ctx.fillText(shape.caption, shape.points[0].x + 2, shape.points[0].y - 4);
        break;
      case "text":
        ctx.fillText(shape.caption, shape.at.x, shape.at.y);
        break;
    }
  }
}
