// Background worker: owns the coordinator client and the one-in-flight
// rule per tab; content scripts stay free of network permissions.

import { CoordinatorClient, CoordinatorUnreachable } from './api';
import { HighlightCapture } from './capture';
import { chromeStore, getInstallationId, savePendingCapture } from './storage';

const COORDINATOR_URL = 'http://127.0.0.1:7711';

const inFlight = new Set<number>();
const store = chromeStore(chrome);

async function runCheck(tabId: number, capture: HighlightCapture): Promise<void> {
  if (inFlight.has(tabId)) {
    chrome.tabs.sendMessage(tabId, {
      type: 'CHECK_RESULT',
      status: {
        check_id: '', status: 'failed',
        error: 'a check is already running in this tab',
        prices: {}, gate: null, reps_done: 0,
        product_uri: capture.pageUri,
      },
    });
    return;
  }
  inFlight.add(tabId);
  try {
    const client = new CoordinatorClient(COORDINATOR_URL, {
      installationId: await getInstallationId(store),
    });
    const checkId = await client.submitCheck(capture);
    const status = await client.waitForResult(checkId);
    chrome.tabs.sendMessage(tabId, { type: 'CHECK_RESULT', status });
  } catch (err) {
    if (err instanceof CoordinatorUnreachable) {
      await savePendingCapture(store, capture);
      chrome.tabs.sendMessage(tabId, { type: 'COORDINATOR_OFFLINE' });
    } else {
      chrome.tabs.sendMessage(tabId, {
        type: 'CHECK_RESULT',
        status: {
          check_id: '', status: 'failed', error: String(err),
          prices: {}, gate: null, reps_done: 0,
          product_uri: capture.pageUri,
        },
      });
    }
  } finally {
    inFlight.delete(tabId);
  }
}

chrome.runtime.onMessage.addListener((message, sender) => {
  if (message.type === 'SUBMIT_CHECK' && sender.tab?.id !== undefined) {
    void runCheck(sender.tab.id, message.capture as HighlightCapture);
  }
});

chrome.action.onClicked.addListener((tab) => {
  if (tab.id !== undefined) {
    chrome.tabs.sendMessage(tab.id, { type: 'CAPTURE_AND_CHECK' });
  }
});
