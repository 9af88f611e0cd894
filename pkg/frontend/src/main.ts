/** Console entry point: wire input, client, and renderer to the DOM. */

import { SessionClient } from './client.js';
import { InputState } from './input.js';
import { Renderer, SceneHints, ViewPreset } from './renderer.js';
import { ConsoleState } from './state.js';

// matches configs/scene_tube.toml on the server side
const HINTS: SceneHints = {
  tubeCenter: [0.22, 0.22, 0.20],
  tubeRadius: 0.015,
  tubeHeight: 0.115,
  graspMark: [0.22, 0.205, 0.20],
};

const VIEWS: ViewPreset[] = ['iso', 'top', 'side'];

function wsUrl(): string {
  const q = new URLSearchParams(location.search).get('server');
  if (q) return q;
  const host = location.host || '127.0.0.1:8765';
  return `ws://${host}/ws`;
}

function start(): void {
  const canvas = document.getElementById('view') as HTMLCanvasElement;
  const ctx = canvas.getContext('2d')!;
  const consoleState = new ConsoleState();
  const input = new InputState();
  const renderer = new Renderer(ctx, canvas.width, canvas.height, HINTS);
  const client = new SessionClient(wsUrl(), consoleState, input);
  client.connect();

  canvas.addEventListener('pointerdown', () => input.pointerDown());
  window.addEventListener('pointerup', () => input.pointerUp());
  canvas.addEventListener('pointermove', (e) => input.pointerMove(e.movementX, e.movementY));
  canvas.addEventListener('wheel', (e) => {
    e.preventDefault();
    input.wheel(e.deltaY);
  }, { passive: false });
  window.addEventListener('keydown', (e) => {
    if (e.key === 'v') {
      renderer.view = VIEWS[(VIEWS.indexOf(renderer.view) + 1) % VIEWS.length];
      return;
    }
    input.key(e.key.toLowerCase());
  });

  for (const s of [1, 2, 3, 4, 5]) {
    document.getElementById(`scale${s}`)?.addEventListener('click', () => input.key(String(s)));
  }
  for (const ax of ['x', 'y', 'z']) {
    document.getElementById(`lock${ax}`)?.addEventListener('click', () => input.key(ax));
  }
  document.getElementById('gripper')?.addEventListener('click', () => input.key(' '));

  const frame = () => {
    renderer.draw(consoleState);
    requestAnimationFrame(frame);
  };
  frame();
}

start();
