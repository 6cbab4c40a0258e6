// Installation identity: one random opaque token, created on first use.
// No account system; the token is the only requester attribution.

export interface KeyValueStore {
  get(key: string): Promise<string | null>;
  set(key: string, value: string): Promise<void>;
}

const INSTALL_KEY = 'pricescope-installation-id';
const PENDING_KEY = 'pricescope-pending-capture';

export function randomToken(): string {
  const cryptoObj = globalThis.crypto;
  if (cryptoObj?.randomUUID) return cryptoObj.randomUUID().replace(/-/g, '');
  return Array.from({ length: 4 }, () =>
    Math.floor(Math.random() * 36 ** 8).toString(36),
  ).join('');
}

export async function getInstallationId(store: KeyValueStore): Promise<string> {
  const existing = await store.get(INSTALL_KEY);
  if (existing) return existing;
  const token = randomToken();
  await store.set(INSTALL_KEY, token);
  return token;
}

export async function savePendingCapture(
  store: KeyValueStore,
  capture: unknown,
): Promise<void> {
  await store.set(PENDING_KEY, JSON.stringify(capture));
}

export async function takePendingCapture(
  store: KeyValueStore,
): Promise<unknown | null> {
  const raw = await store.get(PENDING_KEY);
  if (!raw) return null;
  await store.set(PENDING_KEY, '');
  return JSON.parse(raw);
}

export function memoryStore(): KeyValueStore {
  const map = new Map<string, string>();
  return {
    async get(key) {
      return map.get(key) ?? null;
    },
    async set(key, value) {
      map.set(key, value);
    },
  };
}

// chrome.storage.local behind the same façade (used by the real extension)
export function chromeStore(chromeLike: {
  storage: { local: { get: Function; set: Function } };
}): KeyValueStore {
  return {
    get(key) {
      return new Promise((resolve) => {
        chromeLike.storage.local.get([key], (items: Record<string, string>) => {
          resolve(items[key] ?? null);
        });
      });
    },
    set(key, value) {
      return new Promise((resolve) => {
        chromeLike.storage.local.set({ [key]: value }, () => resolve());
      });
    },
  };
}
