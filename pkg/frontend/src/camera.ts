// World <-> screen mapping: world +x is screen-up at zero pan, y is left.
// Linear transform: screen = center + zoom * R(world - pan).

export class Camera {
  panX = 0;
  panY = 0;
  zoom = 80; // pixels per meter

  constructor(public width = 800, public height = 600) {}

  toScreen(wx: number, wy: number): [number, number] {
    // top-down view with the world x axis pointing up on screen
    const sx = this.width / 2 - (wy - this.panY) * this.zoom;
    const sy = this.height / 2 - (wx - this.panX) * this.zoom;
    return [sx, sy];
  }

  scale(meters: number): number {
    return meters * this.zoom;
  }

  zoomBy(factor: number): void {
    this.zoom = Math.min(400, Math.max(10, this.zoom * factor));
  }

  panBy(dxPixels: number, dyPixels: number): void {
    this.panY += dxPixels / this.zoom;
    this.panX += dyPixels / this.zoom;
  }

  follow(wx: number, wy: number, blend = 0.1): void {
    this.panX += (wx - this.panX) * blend;
    this.panY += (wy - this.panY) * blend;
  }
}
