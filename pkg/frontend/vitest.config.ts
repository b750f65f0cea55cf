import { defineConfig } from "vitest/config";

// The UI is served from the same origin as the API in production; tests pin
// that origin so happy-dom's same-origin policy matches deployment.
export const TEST_PORT = 18_734;

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: { url: `http://127.0.0.1:${TEST_PORT}` },
    },
    testTimeout: 180_000,
    hookTimeout: 120_000,
  },
});
