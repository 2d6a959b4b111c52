import { defineConfig } from "vitest/config";

// every test spawns real python processes, so give them room
export default defineConfig({
  test: {
    testTimeout: 20000,
    hookTimeout: 20000,
  },
});
