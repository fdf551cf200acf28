import { describe, expect, it } from "vitest";
import { ApiClient, ApiError, type FetchLike } from "../src/api.js";

interface Call {
  url: string;
  method: string;
  body: unknown;
}

function stubFetch(
  status: number,
  payload: unknown,
  headers: Record<string, string> = {},
): { fetch: FetchLike; calls: Call[] } {
  const calls: Call[] = [];
  const fetch: FetchLike = async (url, init) => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    });
    return {
      ok: status >= 200 && status < 300,
      status,
      headers: { get: (name: string) => headers[name.toLowerCase()] ?? null },
      json: async () => payload,
    } as unknown as Response;
  };
  return { fetch, calls };
}

describe("ApiClient routing", () => {
  it("maps each action to exactly its documented route", async () => {
    const cases: [
      (client: ApiClient) => Promise<unknown>,
      string,
      string,
    ][] = [
      [(c) => c.listUseCases(), "GET", "/use-cases"],
      [(c) => c.getSchema("kg-empire"), "GET", "/use-cases/kg-empire/schema"],
      [(c) => c.listQuestions("kg-empire"), "GET", "/use-cases/kg-empire/questions"],
      [
        (c) => c.runCurated("kg-empire", 3),
        "POST",
        "/use-cases/kg-empire/questions/3/run",
      ],
      [
        (c) => c.runCustom("kg-empire", "How many studies?"),
        "POST",
        "/use-cases/kg-empire/custom/run",
      ],
      [
        (c) =>
          c.refine("s1", {
            outcome_ref: "o1",
            instruction: "sort descending",
            target: "chart",
            mode: "prompt",
          }),
        "POST",
        "/sessions/s1/refine",
      ],
      [(c) => c.history("s1"), "GET", "/sessions/s1/history"],
      [
        (c) => c.setRetained("s1", "e9", false),
        "POST",
        "/sessions/s1/events/e9/retained",
      ],
      [(c) => c.importBundle({ bundle_version: 1 }), "POST", "/import"],
      [(c) => c.statistics(), "GET", "/statistics"],
      [(c) => c.apiDescription(), "GET", "/api-description"],
    ];
    for (const [invoke, method, path] of cases) {
      const { fetch, calls } = stubFetch(200, {});
      await invoke(new ApiClient("http://host", fetch));
      expect(calls).toHaveLength(1);
      expect(calls[0]?.method).toBe(method);
      expect(calls[0]?.url).toBe(`http://host${path}`);
    }
  });

  it("sends JSON bodies on run and retained routes", async () => {
    const { fetch, calls } = stubFetch(200, {});
    const client = new ApiClient("http://host", fetch);
    await client.runCurated("kg-empire", 1, "sess-7");
    await client.setRetained("sess-7", "ev-1", true);
    expect(calls[0]?.body).toEqual({ session_id: "sess-7" });
    expect(calls[1]?.body).toEqual({ retained: true });
  });

  it("parses the export filename from Content-Disposition", async () => {
    const { fetch } = stubFetch(
      200,
      { bundle_version: 1 },
      { "content-disposition": 'attachment; filename="abc123.cqbundle.json"' },
    );
    const client = new ApiClient("http://host", fetch);
    const result = await client.exportBundle("s1", "abc123");
    expect(result.filename).toBe("abc123.cqbundle.json");
    expect(result.bundle).toEqual({ bundle_version: 1 });
  });

  it("raises ApiError with the structured body on failure", async () => {
    const body = {
      code: "not-found",
      message: "no such question",
      correlation_id: "cid-1",
    };
    const { fetch } = stubFetch(404, body);
    const client = new ApiClient("http://host", fetch);
    const error = await client.listQuestions("nope").catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(404);
    expect(error.body).toEqual(body);
    expect(error.isRateLimit).toBe(false);
  });

  it("recognizes rate-limit errors", async () => {
    const { fetch } = stubFetch(429, {
      code: "rate-limit",
      message: "daily quota exhausted",
      correlation_id: "cid-2",
      retry_after: 3600,
    });
    const client = new ApiClient("http://host", fetch);
    const error = await client.runCustom("kg-empire", "q").catch((e) => e);
    expect(error.isRateLimit).toBe(true);
    expect(error.body.retry_after).toBe(3600);
  });
});
