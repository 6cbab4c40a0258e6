// Minimal declarations for the extension APIs this project touches.

interface ChromeMessageSender {
  tab?: { id?: number };
}

interface ChromeRuntime {
  onMessage: {
    addListener(
      callback: (
        message: any,
        sender: ChromeMessageSender,
        sendResponse: (response?: any) => void,
      ) => boolean | void,
    ): void;
  };
  sendMessage(message: any, callback?: (response: any) => void): void;
  lastError?: { message?: string };
}

interface ChromeTabs {
  sendMessage(tabId: number, message: any): void;
}

interface ChromeStorageArea {
  get(keys: string[], callback: (items: Record<string, any>) => void): void;
  set(items: Record<string, any>, callback?: () => void): void;
}

interface ChromeAction {
  onClicked: { addListener(callback: (tab: { id?: number }) => void): void };
}

declare const chrome: {
  runtime: ChromeRuntime;
  tabs: ChromeTabs;
  storage: { local: ChromeStorageArea };
  action: ChromeAction;
};
