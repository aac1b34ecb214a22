import { defineConfig } from "vite";

export default defineConfig({
  server: {
    // forward gateway calls during development; production serves the built
    // assets from the same origin as the gateway
    proxy: {
      "/scene": "http://127.0.0.1:8080",
      "/events": "http://127.0.0.1:8080",
      "/commands": "http://127.0.0.1:8080",
      "/healthz": "http://127.0.0.1:8080",
    },
  },
  build: { outDir: "dist" },
});
