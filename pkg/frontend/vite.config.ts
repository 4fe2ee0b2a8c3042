import { defineConfig } from "vitest/config";

// The dev server proxies API routes to a locally running rating service so
// the SPA can be developed against real data; the production build is a
// static bundle served by the service itself (its --frontend flag).
const API_ROUTES = ["/health", "/diagrams", "/assignments", "/summary"];

export default defineConfig({
  build: {
    outDir: "dist",
    sourcemap: true,
  },
  server: {
    proxy: Object.fromEntries(
      API_ROUTES.map((route) => [route, "http://127.0.0.1:8000"]),
    ),
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
