import { describe, expect, it } from "vitest";

import {
  canViewConsensus,
  createSession,
  isAuthenticated,
  login,
  logout,
  markSubmitted,
  validateScore,
  DIMENSIONS,
} from "../src/state.js";

describe("session", () => {
  it("starts unauthenticated with blind mode on", () => {
    const s = createSession();
    expect(isAuthenticated(s)).toBe(false);
    expect(s.blindMode).toBe(true);
  });

  it("logout clears token and submissions", () => {
    const s = createSession();
    login(s, "tok");
    markSubmitted(s, "r1");
    logout(s);
    expect(isAuthenticated(s)).toBe(false);
    expect(s.submittedReports.size).toBe(0);
  });
});

describe("blind mode gating", () => {
  it("masks consensus before the reviewer submits", () => {
    const s = createSession(true);
    expect(canViewConsensus(s, "r1")).toBe(false);
  });

  it("unmasks only the submitted report", () => {
    const s = createSession(true);
    markSubmitted(s, "r1");
    expect(canViewConsensus(s, "r1")).toBe(true);
    expect(canViewConsensus(s, "r2")).toBe(false);
  });

  it("blind mode off shows consensus immediately", () => {
    const s = createSession(false);
    expect(canViewConsensus(s, "r1")).toBe(true);
  });
});

describe("client-side score validation", () => {
  it("accepts integers 1..10", () => {
    expect(validateScore(1)).toBe(1);
    expect(validateScore("10")).toBe(10);
    expect(validateScore("7")).toBe(7);
  });

  it("blocks out-of-range and non-integer values", () => {
    expect(validateScore(0)).toBeNull();
    expect(validateScore(11)).toBeNull();
    expect(validateScore("5.5")).toBeNull();
    expect(validateScore("")).toBeNull();
    expect(validateScore("abc")).toBeNull();
  });
});

describe("dimensions", () => {
  it("exposes the four canonical names in order", () => {
    expect([...DIMENSIONS]).toEqual([
      "Reliability",
      "Completeness",
      "Understandability",
      "Relevance",
    ]);
  });
});
